//! Exact equilibria of k-integral games and the packet-size schedule that
//! turns them into approximate equilibria of the splittable game.
//!
//! Internally every strategy is held as packet counts, so feasibility checks
//! run in integer arithmetic against rank tables expressed in packets.

use num_bigint::BigInt;
use num_traits::One;

use crate::error::{Error, Result};
use crate::game::{marginal_down, marginal_up, Game, MarginalDown, Profile};
use crate::poly::{rho_gcd, RankOracle};
use crate::rational::Rational;
use crate::verify::{epsilon_gap, GapCertificate};

/// Deadband for strict comparisons between binary64 marginals.
pub const MARGINAL_DEADBAND: f64 = 1e-12;

/// Multiplier on `n m (D/k)^3` bounding the number of single-packet moves.
pub const ITERATION_CAP_FACTOR: u128 = 16;

/// Denominator used to round the Lipschitz constant up to a rational.
pub const LIPSCHITZ_DENOMINATOR: i64 = 1_000_000;

/// Packet size for a target accuracy, with the quantities it was built from.
#[derive(Clone, Debug, PartialEq)]
pub struct PacketSchedule {
    pub epsilon: f64,
    pub k: Rational,
    pub rho_gcd: Rational,
    pub lipschitz: f64,
    /// `lipschitz` rounded up to a multiple of `1 / LIPSCHITZ_DENOMINATOR`.
    pub lipschitz_bound: Rational,
    pub delta: Rational,
    pub m: usize,
    /// `ceil(2 m^2 L delta (delta + 1) / epsilon)`, at least 1.
    pub divisor: BigInt,
}

impl PacketSchedule {
    /// `k = rho_gcd / ceil(2 m^2 L delta (delta + 1) / epsilon)`.
    pub fn compute(
        m: usize,
        lipschitz: f64,
        delta: &Rational,
        rho_gcd: &Rational,
        epsilon: f64,
    ) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::input(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(lipschitz >= 0.0) || !lipschitz.is_finite() {
            return Err(Error::input(format!("invalid Lipschitz constant {lipschitz}")));
        }
        let lipschitz_bound = Rational::ceil_to_denominator(lipschitz, LIPSCHITZ_DENOMINATOR)
            .expect("finite lipschitz");
        let eps = Rational::from_f64(epsilon).expect("finite epsilon");
        let m2 = Rational::from((m * m) as u64);
        let value = Rational::from_integer(2) * m2 * &lipschitz_bound * delta
            * (delta + &Rational::one())
            / eps;
        let mut divisor = value.ceil().numer().clone();
        if divisor < BigInt::one() {
            divisor = BigInt::one();
        }
        let k = rho_gcd / &Rational::from_bigints(divisor.clone(), BigInt::one());
        Ok(PacketSchedule {
            epsilon,
            k,
            rho_gcd: rho_gcd.clone(),
            lipschitz,
            lipschitz_bound,
            delta: delta.clone(),
            m,
            divisor,
        })
    }

    /// Predicted number of packets of the largest player, `delta / k`.
    pub fn packets(&self) -> Rational {
        &self.delta / &self.k
    }
}

/// Granularity shared by every rank value and every demand of the game.
pub fn game_rho_gcd(g: &Game) -> Rational {
    let mut values: Vec<Rational> = Vec::new();
    for p in g.players() {
        values.extend(p.polymatroid.rank_values());
        values.push(p.demand.clone());
    }
    rho_gcd(&values)
}

pub fn packet_size(g: &Game, epsilon: f64) -> Result<PacketSchedule> {
    PacketSchedule::compute(g.m(), g.lipschitz(), &g.delta(), &game_rho_gcd(g), epsilon)
}

/// Work estimate `(delta/k)^3`, the cubic term of the dynamics' running-time
/// bound. Usually far above the moves actually made.
pub fn predicted_work(g: &Game, k: &Rational) -> f64 {
    (g.delta() / k).to_f64().powi(3)
}

/// Rank function of one player measured in packets.
#[derive(Clone, Debug)]
enum PacketOracle {
    Simplex { allowed: Vec<bool>, cap: u64 },
    Explicit { caps: Vec<u64> },
}

impl PacketOracle {
    fn new(g: &Game, i: usize, k: &Rational) -> Result<Self> {
        let to_packets = |v: &Rational| {
            v.multiple_of(k).ok_or_else(|| {
                Error::input(format!(
                    "packet size {k} does not divide rank value {v} of player {i}"
                ))
            })
        };
        Ok(match g.player(i).polymatroid.oracle() {
            RankOracle::Simplex { allowed, rank } => PacketOracle::Simplex {
                allowed: allowed.clone(),
                cap: to_packets(rank)?,
            },
            RankOracle::Explicit { table } => PacketOracle::Explicit {
                caps: table.iter().map(to_packets).collect::<Result<_>>()?,
            },
        })
    }

    /// `x + chi_e` stays inside the polymatroid.
    fn can_add(&self, counts: &[u64], e: usize) -> bool {
        match self {
            PacketOracle::Simplex { allowed, cap } => {
                allowed[e] && counts.iter().sum::<u64>() < *cap
            }
            PacketOracle::Explicit { caps } => {
                let sums = crate::poly::subset_sums(counts);
                sums.iter()
                    .zip(caps)
                    .enumerate()
                    .all(|(mask, (s, c))| mask >> e & 1 == 0 || s < c)
            }
        }
    }

    /// `x + chi_e - chi_f` stays inside the base polytope.
    fn can_exchange(&self, counts: &[u64], e: usize, f: usize) -> bool {
        if counts[f] == 0 {
            return false;
        }
        match self {
            PacketOracle::Simplex { allowed, .. } => allowed[e],
            PacketOracle::Explicit { caps } => {
                let sums = crate::poly::subset_sums(counts);
                sums.iter().zip(caps).enumerate().all(|(mask, (s, c))| {
                    mask >> e & 1 == 0 || mask >> f & 1 == 1 || s < c
                })
            }
        }
    }
}

/// One step of the incremental dynamics.
#[derive(Clone, Debug, PartialEq)]
pub enum Move {
    /// A new packet of `player` placed on `resource`.
    Increment { player: usize, resource: usize },
    /// One packet of `player` moved from `from` to `to`, lowering the
    /// player's cost by `gain`.
    Exchange {
        player: usize,
        to: usize,
        from: usize,
        gain: f64,
    },
}

/// A pair `(e, f)` where moving one packet of `player` from `f` to `e` is
/// feasible and strictly improving.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Violation {
    pub player: usize,
    pub to: usize,
    pub from: usize,
    pub gain: f64,
}

struct PacketState<'g> {
    game: &'g Game,
    k: Rational,
    kf: f64,
    oracles: Vec<PacketOracle>,
    counts: Vec<Vec<u64>>,
    totals: Vec<u64>,
}

impl<'g> PacketState<'g> {
    fn new(game: &'g Game, k: &Rational) -> Result<Self> {
        if !k.is_positive() {
            return Err(Error::input(format!("packet size must be positive, got {k}")));
        }
        let oracles = (0..game.n())
            .map(|i| PacketOracle::new(game, i, k))
            .collect::<Result<Vec<_>>>()?;
        Ok(PacketState {
            game,
            k: k.clone(),
            kf: k.to_f64(),
            oracles,
            counts: vec![vec![0; game.m()]; game.n()],
            totals: vec![0; game.m()],
        })
    }

    fn from_profile(game: &'g Game, k: &Rational, x: &Profile) -> Result<Self> {
        let mut state = Self::new(game, k)?;
        let counts = match x {
            Profile::Integral { k: xk, counts } if xk == k => counts.clone(),
            _ => {
                return Err(Error::input(format!(
                    "expected an integral profile with packet size {k}"
                )))
            }
        };
        if counts.len() != game.n() || counts.iter().any(|row| row.len() != game.m()) {
            return Err(Error::input("profile shape does not match the game"));
        }
        for e in 0..game.m() {
            state.totals[e] = counts.iter().map(|row| row[e]).sum();
        }
        state.counts = counts;
        Ok(state)
    }

    fn own(&self, i: usize, e: usize) -> f64 {
        self.counts[i][e] as f64 * self.kf
    }

    fn total(&self, e: usize) -> f64 {
        self.totals[e] as f64 * self.kf
    }

    fn up(&self, i: usize, e: usize) -> f64 {
        marginal_up(self.game.cost(i, e), self.own(i, e), self.total(e), self.kf)
    }

    fn down(&self, i: usize, e: usize) -> MarginalDown {
        marginal_down(self.game.cost(i, e), self.own(i, e), self.total(e), self.kf)
    }

    fn add(&mut self, i: usize, e: usize) {
        self.counts[i][e] += 1;
        self.totals[e] += 1;
    }

    fn remove(&mut self, i: usize, e: usize) {
        self.counts[i][e] -= 1;
        self.totals[e] -= 1;
    }

    /// Cheapest feasible resource for one more packet of `i`.
    fn greedy_target(&self, i: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for e in 0..self.game.m() {
            if !self.oracles[i].can_add(&self.counts[i], e) {
                continue;
            }
            let cost = self.up(i, e);
            if best.map_or(true, |(_, b)| cost < b) {
                best = Some((e, cost));
            }
        }
        best.map(|(e, _)| e)
    }

    /// All improving feasible single-packet exchanges of player `i`, in
    /// lexicographic `(to, from)` order.
    fn violations_of(&self, i: usize) -> Vec<Violation> {
        let m = self.game.m();
        let downs: Vec<MarginalDown> = (0..m).map(|f| self.down(i, f)).collect();
        if downs.iter().all(|d| *d == MarginalDown::NegInfinity) {
            return Vec::new();
        }
        let mut out = Vec::new();
        for e in 0..m {
            let up = self.up(i, e);
            for f in 0..m {
                if e == f {
                    continue;
                }
                let Some(down) = downs[f].finite() else { continue };
                if up < down - MARGINAL_DEADBAND
                    && self.oracles[i].can_exchange(&self.counts[i], e, f)
                {
                    out.push(Violation {
                        player: i,
                        to: e,
                        from: f,
                        gain: down - up,
                    });
                }
            }
        }
        out
    }

    fn first_violation(&self) -> Option<Violation> {
        (0..self.game.n()).find_map(|i| self.violations_of(i).into_iter().next())
    }

    fn best_violation_of(&self, i: usize) -> Option<Violation> {
        self.violations_of(i)
            .into_iter()
            .fold(None, |best: Option<Violation>, v| match best {
                Some(b) if b.gain >= v.gain => Some(b),
                _ => Some(v),
            })
    }

    fn apply(&mut self, v: &Violation) {
        self.remove(v.player, v.from);
        self.add(v.player, v.to);
    }

    fn profile(&self) -> Profile {
        Profile::Integral {
            k: self.k.clone(),
            counts: self.counts.clone(),
        }
    }
}

fn demand_packets(g: &Game, i: usize, k: &Rational) -> Result<u64> {
    g.demand(i).multiple_of(k).ok_or_else(|| {
        Error::input(format!(
            "packet size {k} does not divide demand {} of player {i}",
            g.demand(i)
        ))
    })
}

/// A best response of player `i` in the `k`-integral game against the other
/// players' strategies in `x` (row `i` of `x` is ignored).
///
/// Greedy packet placement followed by exchange repair until no improving
/// single-packet exchange remains.
pub fn best_response_k(g: &Game, k: &Rational, i: usize, x: &Profile) -> Result<Vec<Rational>> {
    let mut state = PacketState::from_profile(g, k, x)?;
    let target = demand_packets(g, i, k)?;
    for e in 0..g.m() {
        state.totals[e] -= state.counts[i][e];
        state.counts[i][e] = 0;
    }
    for _ in 0..target {
        let e = state.greedy_target(i).ok_or_else(|| {
            Error::internal(format!("no feasible resource for a packet of player {i}"))
        })?;
        state.add(i, e);
    }
    while let Some(v) = state.best_violation_of(i) {
        state.apply(&v);
    }
    Ok(state.counts[i].iter().map(|&c| k * Rational::from(c)).collect())
}

/// First feasible improving single-packet exchange, scanning players in
/// index order and pairs `(to, from)` lexicographically. `None` certifies
/// `x` as an equilibrium of the `k`-integral game.
pub fn local_violation(g: &Game, k: &Rational, x: &Profile) -> Result<Option<Violation>> {
    Ok(PacketState::from_profile(g, k, x)?.first_violation())
}

#[derive(Clone, Debug, Default)]
pub struct SolveOptions {
    pub record_trace: bool,
}

#[derive(Clone, Debug)]
pub struct EquilibriumResult {
    pub profile: Profile,
    pub k: Rational,
    /// Single-packet improving moves applied.
    pub best_response_count: u64,
    pub demand_increments: u64,
    pub certified_local_optimal: bool,
    /// Empty unless requested through [`SolveOptions::record_trace`].
    pub trace: Vec<Move>,
}

pub fn solve_integral(g: &Game, k: &Rational) -> Result<EquilibriumResult> {
    solve_integral_with(g, k, &SolveOptions::default())
}

/// Incremental dynamics: starting from all-zero demands, repeatedly give the
/// lowest-index unsaturated player one more packet at its cheapest feasible
/// resource, then apply improving single-packet exchanges until none is left.
pub fn solve_integral_with(g: &Game, k: &Rational, opts: &SolveOptions) -> Result<EquilibriumResult> {
    let mut state = PacketState::new(g, k)?;
    let targets = (0..g.n())
        .map(|i| demand_packets(g, i, k))
        .collect::<Result<Vec<_>>>()?;
    let total_packets: u128 = targets.iter().map(|&t| t as u128).sum();
    let cap = ITERATION_CAP_FACTOR
        .saturating_mul((g.n() * g.m()) as u128)
        .saturating_mul(total_packets.saturating_pow(3));

    let mut working = vec![0u64; g.n()];
    let mut trace = Vec::new();
    let mut moves = 0u64;
    let mut increments = 0u64;

    while let Some(i) = (0..g.n()).find(|&i| working[i] < targets[i]) {
        working[i] += 1;
        increments += 1;
        let e = state.greedy_target(i).ok_or_else(|| {
            Error::internal(format!("no feasible resource for a packet of player {i}"))
        })?;
        state.add(i, e);
        if opts.record_trace {
            trace.push(Move::Increment { player: i, resource: e });
        }
        while let Some(v) = state.first_violation() {
            if moves as u128 >= cap {
                return Err(Error::NonTermination {
                    cap,
                    steps: moves,
                    last_profile: Box::new(state.profile()),
                });
            }
            state.apply(&v);
            moves += 1;
            if opts.record_trace {
                trace.push(Move::Exchange {
                    player: v.player,
                    to: v.to,
                    from: v.from,
                    gain: v.gain,
                });
            }
        }
    }

    let certified = state.first_violation().is_none();
    Ok(EquilibriumResult {
        profile: state.profile(),
        k: k.clone(),
        best_response_count: moves,
        demand_increments: increments,
        certified_local_optimal: certified,
        trace,
    })
}

#[derive(Clone, Debug)]
pub struct ApproxSolution {
    pub schedule: PacketSchedule,
    pub equilibrium: EquilibriumResult,
    pub certificate: GapCertificate,
}

/// `epsilon`-approximate equilibrium: exact equilibrium at packet size
/// `k_epsilon`, certified by continuous best responses at tolerance
/// `epsilon / 100`.
pub fn solve_approx(g: &Game, epsilon: f64) -> Result<ApproxSolution> {
    solve_approx_with(g, epsilon, epsilon / 100.0, &SolveOptions::default())
}

pub fn solve_approx_with(
    g: &Game,
    epsilon: f64,
    tol: f64,
    opts: &SolveOptions,
) -> Result<ApproxSolution> {
    let schedule = packet_size(g, epsilon)?;
    let equilibrium = solve_integral_with(g, &schedule.k, opts)?;
    let certificate = epsilon_gap(g, &equilibrium.profile, tol)?;
    if certificate.max_gap > epsilon {
        return Err(Error::internal(format!(
            "k = {} equilibrium has gap {} > epsilon = {epsilon}",
            schedule.k, certificate.max_gap
        )));
    }
    Ok(ApproxSolution {
        schedule,
        equilibrium,
        certificate,
    })
}

/// The bound `2 k L (delta + 1) m^2 delta` on the continuous gap of any
/// `k`-integral equilibrium.
pub fn gap_bound(g: &Game, k: &Rational) -> f64 {
    let delta = g.delta().to_f64();
    let m = g.m() as f64;
    2.0 * k.to_f64() * g.lipschitz() * (delta + 1.0) * m * m * delta
}

/// Whether `k` divides every rank value and demand of the game.
pub fn is_valid_packet_size(g: &Game, k: &Rational) -> bool {
    k.is_positive()
        && g.players().iter().all(|p| {
            p.demand.multiple_of(k).is_some()
                && p.polymatroid
                    .rank_values()
                    .iter()
                    .all(|v| v.multiple_of(k).is_some())
        })
}

impl EquilibriumResult {
    /// Packets per player in the final profile.
    pub fn packet_counts(&self) -> Vec<u64> {
        match &self.profile {
            Profile::Integral { counts, .. } => counts.iter().map(|r| r.iter().sum()).collect(),
            Profile::Continuous { .. } => Vec::new(),
        }
    }
}
