//! Atomic splittable polymatroid congestion games: cost functions, strategy
//! profiles, player costs and marginal costs.
//!
//! Demands and rank values are exact; cost evaluation is binary64.

use crate::error::{Error, Result};
use crate::poly::Polymatroid;
use crate::rational::Rational;

pub const MAX_COST_DEGREE: usize = 4;

/// A polynomial `a_0 + a_1 t + ... + a_r t^r` with nonnegative coefficients,
/// hence nonnegative, nondecreasing and convex on `[0, inf)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CostFunction {
    coeffs: Vec<f64>,
}

impl CostFunction {
    pub fn new(mut coeffs: Vec<f64>) -> Result<Self> {
        if let Some((j, c)) = coeffs
            .iter()
            .enumerate()
            .find(|(_, c)| !c.is_finite() || **c < 0.0)
        {
            return Err(Error::input(format!(
                "cost coefficient a_{j} = {c} must be finite and nonnegative"
            )));
        }
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        if coeffs.len() > MAX_COST_DEGREE + 1 {
            return Err(Error::input(format!(
                "cost degree {} exceeds {MAX_COST_DEGREE}",
                coeffs.len() - 1
            )));
        }
        Ok(CostFunction { coeffs })
    }

    pub fn zero() -> Self {
        CostFunction { coeffs: Vec::new() }
    }

    /// `c(t) = slope * t`.
    pub fn linear(slope: f64) -> Result<Self> {
        Self::new(vec![0.0, slope])
    }

    /// Coefficients in ascending degree, trailing zeros removed.
    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &a| acc * t + a)
    }

    pub fn derivative(&self, t: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (j, &a)| acc * t + j as f64 * a)
    }

    pub fn second_derivative(&self, t: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(2)
            .rev()
            .fold(0.0, |acc, (j, &a)| acc * t + (j * (j - 1)) as f64 * a)
    }

    /// Bound on `|c'|` and `|c''|` over `[0, upper]`. Both derivatives are
    /// nondecreasing, so the maximum sits at `upper`.
    pub fn lipschitz_on(&self, upper: f64) -> f64 {
        self.derivative(upper).max(self.second_derivative(upper))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Player {
    pub demand: Rational,
    pub polymatroid: Polymatroid,
}

/// `(N, E, (d_i), (rho_i), (c_{i,e}))`.
#[derive(Clone, Debug, PartialEq)]
pub struct Game {
    resources: Vec<String>,
    players: Vec<Player>,
    costs: Vec<Vec<CostFunction>>,
}

impl Game {
    /// `costs[i][e]` is player `i`'s cost on resource `e`.
    pub fn new(
        resources: Vec<String>,
        players: Vec<Player>,
        costs: Vec<Vec<CostFunction>>,
    ) -> Result<Self> {
        let m = resources.len();
        if costs.len() != players.len() {
            return Err(Error::input(format!(
                "{} cost rows for {} players",
                costs.len(),
                players.len()
            )));
        }
        for (i, (player, row)) in players.iter().zip(&costs).enumerate() {
            if player.polymatroid.ground_size() != m {
                return Err(Error::input(format!(
                    "player {i}: polymatroid over {} resources, game has {m}",
                    player.polymatroid.ground_size()
                )));
            }
            if row.len() != m {
                return Err(Error::input(format!(
                    "player {i}: {} cost functions for {m} resources",
                    row.len()
                )));
            }
            if player.demand.is_negative() {
                return Err(Error::input(format!("player {i}: negative demand")));
            }
            if let Err(v) = player.polymatroid.validate() {
                return Err(Error::input(format!("player {i}: {v}")));
            }
            let full = player.polymatroid.full_rank();
            if player.demand > full {
                return Err(Error::input(format!(
                    "player {i}: demand {} exceeds rank(E) = {full}",
                    player.demand
                )));
            }
        }
        Ok(Game {
            resources,
            players,
            costs,
        })
    }

    pub fn n(&self) -> usize {
        self.players.len()
    }

    pub fn m(&self) -> usize {
        self.resources.len()
    }

    pub fn resources(&self) -> &[String] {
        &self.resources
    }

    pub fn players(&self) -> &[Player] {
        &self.players
    }

    pub fn player(&self, i: usize) -> &Player {
        &self.players[i]
    }

    pub fn demand(&self, i: usize) -> &Rational {
        &self.players[i].demand
    }

    pub fn cost(&self, i: usize, e: usize) -> &CostFunction {
        &self.costs[i][e]
    }

    /// Largest demand.
    pub fn delta(&self) -> Rational {
        self.players
            .iter()
            .map(|p| p.demand.clone())
            .max()
            .unwrap_or_else(Rational::zero)
    }

    pub fn total_demand(&self) -> Rational {
        self.players.iter().map(|p| &p.demand).sum()
    }

    /// One constant bounding every `|c|`-slope and `|c'|`-slope on
    /// `[0, D_total + 1]`, the range of every reachable aggregate load.
    pub fn lipschitz(&self) -> f64 {
        let upper = self.total_demand().to_f64() + 1.0;
        self.costs
            .iter()
            .flatten()
            .map(|c| c.lipschitz_on(upper))
            .fold(0.0, f64::max)
    }

    /// Exact feasibility of an integral profile, or feasibility within 1e-9
    /// per constraint of a continuous one.
    pub fn check_profile(&self, x: &Profile) -> Result<()> {
        if x.n() != self.n() || (0..x.n()).any(|i| x.player_len(i) != self.m()) {
            return Err(Error::Infeasible(format!(
                "profile shape does not match {} players x {} resources",
                self.n(),
                self.m()
            )));
        }
        for (i, player) in self.players.iter().enumerate() {
            let ok = match x {
                Profile::Integral { .. } => {
                    let exact = x.exact_player_loads(i).expect("integral profile");
                    player.polymatroid.is_in_base(&player.demand, &exact)?
                }
                Profile::Continuous { loads } => player.polymatroid.is_in_base_approx(
                    player.demand.to_f64(),
                    &loads[i],
                    1e-9,
                ),
            };
            if !ok {
                return Err(Error::Infeasible(format!(
                    "player {i}: strategy is outside the base polytope of rank {}",
                    player.demand
                )));
            }
        }
        Ok(())
    }

    /// `pi_i(x) = sum_e c_{i,e}(x_e) x_{i,e}`.
    pub fn player_cost(&self, x: &Profile, i: usize) -> Result<f64> {
        self.check_profile(x)?;
        Ok(self.player_cost_at(&x.loads(), i))
    }

    /// [`Game::player_cost`] without the feasibility check.
    pub fn player_cost_at(&self, loads: &Loads, i: usize) -> f64 {
        (0..self.m())
            .map(|e| self.costs[i][e].eval(loads.total(e)) * loads.get(i, e))
            .sum()
    }

    /// `mu_{i,e}(x) = c_{i,e}(x_e) + x_{i,e} c'_{i,e}(x_e)`.
    pub fn marginal(&self, loads: &Loads, i: usize, e: usize) -> f64 {
        marginal(&self.costs[i][e], loads.get(i, e), loads.total(e))
    }

    /// Cost increase of adding one packet of size `k` on `e`.
    pub fn marginal_up(&self, loads: &Loads, i: usize, e: usize, k: f64) -> f64 {
        marginal_up(&self.costs[i][e], loads.get(i, e), loads.total(e), k)
    }

    /// Cost decrease of removing one packet of size `k` from `e`.
    pub fn marginal_down(&self, loads: &Loads, i: usize, e: usize, k: f64) -> MarginalDown {
        marginal_down(&self.costs[i][e], loads.get(i, e), loads.total(e), k)
    }

    /// `pi_i(own, x_{-i})` where `others[e]` is the load of all other players.
    pub fn cost_against(&self, i: usize, own: &[f64], others: &[f64]) -> f64 {
        (0..self.m())
            .map(|e| self.costs[i][e].eval(own[e] + others[e]) * own[e])
            .sum()
    }

    /// Gradient of `own -> pi_i(own, x_{-i})`, i.e. the marginals `mu_{i,.}`.
    pub fn gradient_against(&self, i: usize, own: &[f64], others: &[f64]) -> Vec<f64> {
        (0..self.m())
            .map(|e| marginal(&self.costs[i][e], own[e], own[e] + others[e]))
            .collect()
    }
}

pub(crate) fn marginal(c: &CostFunction, own: f64, total: f64) -> f64 {
    c.eval(total) + own * c.derivative(total)
}

pub(crate) fn marginal_up(c: &CostFunction, own: f64, total: f64, k: f64) -> f64 {
    (own + k) * c.eval(total + k) - own * c.eval(total)
}

pub(crate) fn marginal_down(c: &CostFunction, own: f64, total: f64, k: f64) -> MarginalDown {
    if own <= 0.0 {
        MarginalDown::NegInfinity
    } else {
        MarginalDown::Finite(own * c.eval(total) - (own - k) * c.eval(total - k))
    }
}

/// Discrete removal marginal. `NegInfinity` (nothing to remove) orders below
/// every finite value and never enters arithmetic.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub enum MarginalDown {
    NegInfinity,
    Finite(f64),
}

impl MarginalDown {
    pub fn finite(self) -> Option<f64> {
        match self {
            MarginalDown::NegInfinity => None,
            MarginalDown::Finite(v) => Some(v),
        }
    }
}

/// Per-player binary64 loads with cached aggregates.
#[derive(Clone, Debug, PartialEq)]
pub struct Loads {
    per_player: Vec<Vec<f64>>,
    totals: Vec<f64>,
}

impl Loads {
    pub fn new(per_player: Vec<Vec<f64>>) -> Self {
        let m = per_player.first().map_or(0, Vec::len);
        let mut totals = vec![0.0; m];
        for row in &per_player {
            for (t, v) in totals.iter_mut().zip(row) {
                *t += v;
            }
        }
        Loads { per_player, totals }
    }

    pub fn get(&self, i: usize, e: usize) -> f64 {
        self.per_player[i][e]
    }

    pub fn player(&self, i: usize) -> &[f64] {
        &self.per_player[i]
    }

    pub fn total(&self, e: usize) -> f64 {
        self.totals[e]
    }

    pub fn totals(&self) -> &[f64] {
        &self.totals
    }

    /// Aggregate load of everyone except `i`.
    pub fn others(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.totals.len()];
        for (j, row) in self.per_player.iter().enumerate() {
            if j != i {
                for (o, v) in out.iter_mut().zip(row) {
                    *o += v;
                }
            }
        }
        out
    }

    /// Replaces player `i`'s loads, recomputing aggregates from scratch.
    pub fn with_player(&self, i: usize, own: &[f64]) -> Loads {
        let mut rows = self.per_player.clone();
        rows[i] = own.to_vec();
        Loads::new(rows)
    }
}

/// A strategy profile: either arbitrary binary64 loads, or packet counts of
/// an exact packet size `k` (`x_{i,e} = k * counts[i][e]`).
#[derive(Clone, Debug, PartialEq)]
pub enum Profile {
    Continuous { loads: Vec<Vec<f64>> },
    Integral { k: Rational, counts: Vec<Vec<u64>> },
}

impl Profile {
    pub fn zero_integral(n: usize, m: usize, k: Rational) -> Self {
        Profile::Integral {
            k,
            counts: vec![vec![0; m]; n],
        }
    }

    /// Interprets exact per-player loads as a `k`-integral profile; fails if
    /// some load is not a nonnegative multiple of `k`.
    pub fn from_exact(k: Rational, loads: &[Vec<Rational>]) -> Result<Self> {
        let counts = loads
            .iter()
            .map(|row| {
                row.iter()
                    .map(|v| {
                        v.multiple_of(&k).ok_or_else(|| {
                            Error::Infeasible(format!("load {v} is not a multiple of k = {k}"))
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Profile::Integral { k, counts })
    }

    pub fn n(&self) -> usize {
        match self {
            Profile::Continuous { loads } => loads.len(),
            Profile::Integral { counts, .. } => counts.len(),
        }
    }

    fn player_len(&self, i: usize) -> usize {
        match self {
            Profile::Continuous { loads } => loads[i].len(),
            Profile::Integral { counts, .. } => counts[i].len(),
        }
    }

    pub fn packet_size(&self) -> Option<&Rational> {
        match self {
            Profile::Continuous { .. } => None,
            Profile::Integral { k, .. } => Some(k),
        }
    }

    pub fn exact_player_loads(&self, i: usize) -> Option<Vec<Rational>> {
        match self {
            Profile::Continuous { .. } => None,
            Profile::Integral { k, counts } => {
                Some(counts[i].iter().map(|&c| k * Rational::from(c)).collect())
            }
        }
    }

    /// Binary64 view. Integral aggregates are formed from exact counts.
    pub fn loads(&self) -> Loads {
        match self {
            Profile::Continuous { loads } => Loads::new(loads.clone()),
            Profile::Integral { k, counts } => {
                let kf = k.to_f64();
                let m = counts.first().map_or(0, Vec::len);
                let per_player = counts
                    .iter()
                    .map(|row| row.iter().map(|&c| c as f64 * kf).collect())
                    .collect();
                let totals = (0..m)
                    .map(|e| counts.iter().map(|row| row[e]).sum::<u64>() as f64 * kf)
                    .collect();
                Loads { per_player, totals }
            }
        }
    }
}
