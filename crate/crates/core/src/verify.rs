//! Certification of approximate equilibria against the continuous game.
//!
//! Continuous best responses are computed by conditional gradient over the
//! player's base polytope; the exact greedy vertex oracle makes each linear
//! subproblem exact. The transshipment and gradient decomposition expose
//! the exchange structure between two base-polytope points.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::flow::max_flow;
use crate::game::{Game, Profile};
use crate::poly::Polymatroid;
use crate::rational::Rational;

pub const MAX_CG_ITERATIONS: usize = 100_000;
const LINE_SEARCH_STEPS: usize = 60;

/// Per-player gap report: `gaps[i] = pi_i(x) - pi_i(witnesses[i], x_{-i})`.
#[derive(Clone, Debug, PartialEq)]
pub struct GapCertificate {
    pub gaps: Vec<f64>,
    pub witnesses: Vec<Vec<f64>>,
    pub tol: f64,
    pub max_gap: f64,
}

impl GapCertificate {
    /// Accuracy certified for the profile: `max_gap + n tol`.
    pub fn certified_epsilon(&self) -> f64 {
        self.max_gap + self.gaps.len() as f64 * self.tol
    }
}

struct Atom {
    point: Vec<f64>,
    weight: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizer of the convex `gamma -> pi_i(y + gamma dir)` on `[0, max_step]`
/// by bisection on its derivative.
fn line_search(g: &Game, i: usize, others: &[f64], y: &[f64], dir: &[f64], max_step: f64) -> f64 {
    let slope = |gamma: f64| {
        let p: Vec<f64> = y.iter().zip(dir).map(|(a, d)| a + gamma * d).collect();
        dot(&g.gradient_against(i, &p, others), dir)
    };
    if slope(0.0) >= 0.0 {
        return 0.0;
    }
    if slope(max_step) <= 0.0 {
        return max_step;
    }
    let (mut lo, mut hi) = (0.0, max_step);
    for _ in 0..LINE_SEARCH_STEPS {
        let mid = 0.5 * (lo + hi);
        if slope(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Approximate minimizer of `y -> pi_i(y, x_{-i})` over player `i`'s base
/// polytope, where `others[e]` is the aggregate load of the other players.
///
/// Away-step conditional gradient; stops once the duality gap
/// `grad . (y - v)` is at most `tol`, so the returned value is within `tol`
/// of the minimum. `start` must be a feasible strategy when given.
pub fn continuous_best_response(
    g: &Game,
    i: usize,
    others: &[f64],
    tol: f64,
    start: Option<&[f64]>,
) -> Result<Vec<f64>> {
    if !(tol > 0.0) {
        return Err(Error::input(format!("tolerance must be positive, got {tol}")));
    }
    if others.len() != g.m() {
        return Err(Error::input("opponent load vector has the wrong length"));
    }
    let player = g.player(i);
    let demand = &player.demand;
    if demand.is_zero() {
        return Ok(vec![0.0; g.m()]);
    }
    let vertex = |w: &[f64]| -> Result<Vec<f64>> {
        Ok(player
            .polymatroid
            .greedy_linear_min(demand, w)?
            .iter()
            .map(Rational::to_f64)
            .collect())
    };

    let mut y = match start {
        Some(s) => s.to_vec(),
        None => vertex(&g.gradient_against(i, &vec![0.0; g.m()], others))?,
    };
    let mut atoms = vec![Atom { point: y.clone(), weight: 1.0 }];
    let mut last_gap = f64::INFINITY;

    for _ in 0..MAX_CG_ITERATIONS {
        let grad = g.gradient_against(i, &y, others);
        let v = vertex(&grad)?;
        let fw_dir: Vec<f64> = v.iter().zip(&y).map(|(a, b)| a - b).collect();
        let fw_gap = -dot(&grad, &fw_dir);
        last_gap = fw_gap;
        if fw_gap <= tol {
            return Ok(y);
        }

        let (away, away_value) = atoms
            .iter()
            .enumerate()
            .map(|(j, a)| (j, dot(&grad, &a.point)))
            .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
        let away_gap = away_value - dot(&grad, &y);

        if fw_gap >= away_gap || atoms[away].weight >= 1.0 {
            let gamma = line_search(g, i, others, &y, &fw_dir, 1.0);
            for (yy, d) in y.iter_mut().zip(&fw_dir) {
                *yy += gamma * d;
            }
            if gamma >= 1.0 {
                atoms = vec![Atom { point: v, weight: 1.0 }];
            } else {
                for a in atoms.iter_mut() {
                    a.weight *= 1.0 - gamma;
                }
                match atoms.iter_mut().find(|a| a.point == v) {
                    Some(a) => a.weight += gamma,
                    None => atoms.push(Atom { point: v, weight: gamma }),
                }
            }
        } else {
            let w = atoms[away].weight;
            let max_step = w / (1.0 - w);
            let dir: Vec<f64> = y.iter().zip(&atoms[away].point).map(|(a, b)| a - b).collect();
            let gamma = line_search(g, i, others, &y, &dir, max_step);
            for (yy, d) in y.iter_mut().zip(&dir) {
                *yy += gamma * d;
            }
            for a in atoms.iter_mut() {
                a.weight *= 1.0 + gamma;
            }
            atoms[away].weight -= gamma;
            if gamma >= max_step {
                atoms.remove(away);
            }
        }
    }
    Err(Error::Convergence {
        iterations: MAX_CG_ITERATIONS,
        last_gap,
    })
}

/// Per-player continuous deviation gains of `x`. The profile is
/// `(max_gap + n tol)`-approximate.
pub fn epsilon_gap(g: &Game, x: &Profile, tol: f64) -> Result<GapCertificate> {
    g.check_profile(x)?;
    let loads = x.loads();
    let mut gaps = Vec::with_capacity(g.n());
    let mut witnesses = Vec::with_capacity(g.n());
    for i in 0..g.n() {
        let others = loads.others(i);
        let own = loads.player(i);
        let y = continuous_best_response(g, i, &others, tol, Some(own))?;
        let mut gap = g.cost_against(i, own, &others) - g.cost_against(i, &y, &others);
        if gap < 0.0 && gap >= -tol {
            gap = 0.0;
        }
        gaps.push(gap);
        witnesses.push(y);
    }
    let max_gap = gaps.iter().copied().fold(0.0, f64::max);
    Ok(GapCertificate {
        gaps,
        witnesses,
        tol,
        max_gap,
    })
}

/// A flow on the complete bipartite graph from resources where `x` exceeds
/// `y` to resources where `y` exceeds `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct Transshipment {
    /// Resources with `x_e > y_e`.
    pub sources: Vec<usize>,
    /// Resources with `y_f > x_f`.
    pub sinks: Vec<usize>,
    pub supplies: Vec<Rational>,
    pub demands: Vec<Rational>,
    /// `capacities[s][t]`: largest exchange moving load from `sources[s]` to
    /// `sinks[t]` at `x`.
    pub capacities: Vec<Vec<Rational>>,
    pub flows: Vec<Vec<Rational>>,
}

impl Transshipment {
    /// Exact check of supplies, demands, capacities and nonnegativity.
    pub fn is_valid(&self) -> bool {
        let rows_ok = self.flows.iter().zip(&self.supplies).all(|(row, s)| {
            &row.iter().sum::<Rational>() == s && row.iter().all(|f| !f.is_negative())
        });
        let cols_ok = self.demands.iter().enumerate().all(|(t, d)| {
            &self.flows.iter().map(|row| &row[t]).sum::<Rational>() == d
        });
        let caps_ok = self
            .flows
            .iter()
            .zip(&self.capacities)
            .all(|(fr, cr)| fr.iter().zip(cr).all(|(f, c)| f <= c));
        rows_ok && cols_ok && caps_ok
    }
}

/// Decomposes `y - x` (both in the base polytope of rank `d`) into
/// exchanges along capacity-respecting arcs, via max-flow after clearing
/// denominators.
pub fn transshipment(p: &Polymatroid, d: &Rational, x: &[Rational], y: &[Rational]) -> Result<Transshipment> {
    if !p.is_in_base(d, x)? || !p.is_in_base(d, y)? {
        return Err(Error::Infeasible(
            "transshipment endpoints must lie in the base polytope".into(),
        ));
    }
    let m = p.ground_size();
    let sources: Vec<usize> = (0..m).filter(|&e| x[e] > y[e]).collect();
    let sinks: Vec<usize> = (0..m).filter(|&e| y[e] > x[e]).collect();
    let supplies: Vec<Rational> = sources.iter().map(|&e| &x[e] - &y[e]).collect();
    let demands: Vec<Rational> = sinks.iter().map(|&f| &y[f] - &x[f]).collect();
    let capacities: Vec<Vec<Rational>> = sources
        .iter()
        .map(|&e| sinks.iter().map(|&f| p.exchange_capacity(x, f, e)).collect())
        .collect();

    // Nodes: 0 = source, 1..=S sources, S+1..=S+T sinks, S+T+1 = sink.
    let (ns, nt) = (sources.len(), sinks.len());
    let n = ns + nt + 2;
    let sink_node = n - 1;
    let scale = supplies
        .iter()
        .chain(&demands)
        .chain(capacities.iter().flatten())
        .fold(BigInt::one(), |acc, v| acc.lcm(v.denom()));
    let to_int = |v: &Rational| -> BigInt {
        let scaled = v * &Rational::from_bigints(scale.clone(), BigInt::one());
        scaled.numer().clone()
    };
    let mut cap = vec![vec![BigInt::zero(); n]; n];
    for (s, sup) in supplies.iter().enumerate() {
        cap[0][1 + s] = to_int(sup);
        for t in 0..nt {
            cap[1 + s][1 + ns + t] = to_int(&capacities[s][t]);
        }
    }
    for (t, dem) in demands.iter().enumerate() {
        cap[1 + ns + t][sink_node] = to_int(dem);
    }
    let (value, flow) = max_flow(&cap, 0, sink_node);
    let total: Rational = supplies.iter().sum();
    if Rational::from_bigints(value.clone(), scale.clone()) != total {
        return Err(Error::internal(format!(
            "no feasible transshipment: max flow {} < total supply {total}",
            Rational::from_bigints(value, scale)
        )));
    }
    let flows = (0..ns)
        .map(|s| {
            (0..nt)
                .map(|t| Rational::from_bigints(flow[1 + s][1 + ns + t].clone(), scale.clone()))
                .collect()
        })
        .collect();
    Ok(Transshipment {
        sources,
        sinks,
        supplies,
        demands,
        capacities,
        flows,
    })
}

/// `(lhs, rhs)` where `lhs = grad_i pi_i(x) . (y_i - x_i)` from the
/// marginals directly and `rhs` is the same quantity summed over the
/// transshipment arcs as `(mu_f - mu_e) t_{e,f}`. Requires an integral
/// profile so that `x_i` is exact.
pub fn gradient_decomposition(g: &Game, x: &Profile, i: usize, y: &[Rational]) -> Result<(f64, f64)> {
    let xi = x
        .exact_player_loads(i)
        .ok_or_else(|| Error::input("gradient decomposition needs an exact (integral) profile"))?;
    let player = g.player(i);
    let loads = x.loads();
    let mu: Vec<f64> = (0..g.m()).map(|e| g.marginal(&loads, i, e)).collect();
    let lhs: f64 = (0..g.m())
        .map(|e| mu[e] * (&y[e] - &xi[e]).to_f64())
        .sum();
    let t = transshipment(&player.polymatroid, &player.demand, &xi, y)?;
    let mut rhs = 0.0;
    for (s, &e) in t.sources.iter().enumerate() {
        for (k, &f) in t.sinks.iter().enumerate() {
            rhs += (mu[f] - mu[e]) * t.flows[s][k].to_f64();
        }
    }
    Ok((lhs, rhs))
}
