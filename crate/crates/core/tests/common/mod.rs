#![allow(dead_code)]

use polysplit::game::{CostFunction, Game, Loads, Player, Profile};
use polysplit::poly::Polymatroid;
use polysplit::rational::Rational;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn r(s: &str) -> Rational {
    s.parse().unwrap()
}

pub fn names(m: usize) -> Vec<String> {
    (0..m).map(|e| format!("e{}", e + 1)).collect()
}

pub fn subsets_of(mask: usize, m: usize) -> Vec<usize> {
    (0..m).filter(|e| mask >> e & 1 == 1).collect()
}

/// Sum of budget-additive functions `U -> min(cap_j, sum_{e in U} w_{j,e})`,
/// which is normalized, monotone and submodular. Values are multiples of
/// `1/den`.
pub fn random_polymatroid(rng: &mut impl Rng, m: usize, den: i64) -> Polymatroid {
    let parts = rng.gen_range(1..=2);
    let mut weights = Vec::new();
    for _ in 0..parts {
        let w: Vec<i64> = (0..m).map(|_| rng.gen_range(0..=3 * den)).collect();
        let cap = rng.gen_range(1..=4 * den);
        weights.push((w, cap));
    }
    // keep every resource usable so random instances stay interesting
    let table: Vec<Rational> = (0..1usize << m)
        .map(|mask| {
            let v: i64 = weights
                .iter()
                .map(|(w, cap)| {
                    let s: i64 = subsets_of(mask, m).iter().map(|&e| w[e]).sum();
                    s.min(*cap)
                })
                .sum();
            Rational::new(v, den)
        })
        .collect();
    Polymatroid::explicit(m, table).unwrap()
}

/// Exact loads of a uniformly random vertex of the base polytope of rank `d`.
pub fn random_vertex(rng: &mut impl Rng, p: &Polymatroid, d: &Rational) -> Vec<Rational> {
    let w: Vec<f64> = (0..p.ground_size()).map(|_| rng.gen::<f64>()).collect();
    p.greedy_linear_min(d, &w).unwrap()
}

/// Random point of the base polytope of rank `d` with loads that are
/// multiples of `k`, built one packet at a time.
pub fn random_packet_point(rng: &mut impl Rng, p: &Polymatroid, d: &Rational, k: &Rational) -> Vec<Rational> {
    let m = p.ground_size();
    let mut x = vec![Rational::zero(); m];
    let mut placed = Rational::zero();
    while &placed < d {
        let next = &placed + k;
        let mut order: Vec<usize> = (0..m).collect();
        order.shuffle(rng);
        let e = order
            .into_iter()
            .find(|&e| {
                let mut y = x.clone();
                y[e] = &y[e] + k;
                p.is_in_base(&next, &y).unwrap()
            })
            .expect("a packet always fits while below the demand");
        x[e] = &x[e] + k;
        placed = next;
    }
    x
}

pub fn random_cost(rng: &mut impl Rng) -> CostFunction {
    let deg = rng.gen_range(1..=3);
    let coeffs: Vec<f64> = (0..=deg)
        .map(|_| (rng.gen_range(0..=8) as f64) / 4.0)
        .collect();
    let c = CostFunction::new(coeffs).unwrap();
    if c.degree() == 0 {
        CostFunction::new(vec![c.coefficients().first().copied().unwrap_or(0.0), 1.0]).unwrap()
    } else {
        c
    }
}

/// Game with random explicit polymatroids; ranks and demands are multiples
/// of `1/den`.
pub fn random_game(rng: &mut impl Rng, n: usize, m: usize, den: i64) -> Game {
    let mut players = Vec::new();
    for _ in 0..n {
        let p = random_polymatroid(rng, m, den);
        let full = p.full_rank();
        let units = (full.clone() * Rational::from_integer(den)).to_i64().unwrap();
        let demand = Rational::new(rng.gen_range(1..=units.max(1)), den);
        let demand = if demand > full { full } else { demand };
        players.push(Player { demand, polymatroid: p });
    }
    let costs = (0..n)
        .map(|_| (0..m).map(|_| random_cost(rng)).collect())
        .collect();
    Game::new(names(m), players, costs).unwrap()
}

/// Singleton game: every player may use every resource, rank = demand.
pub fn singleton_game(demands: &[Rational], costs: Vec<Vec<CostFunction>>) -> Game {
    let m = costs[0].len();
    let all: Vec<usize> = (0..m).collect();
    let players = demands
        .iter()
        .map(|d| Player {
            demand: d.clone(),
            polymatroid: Polymatroid::simplex(m, &all, d.clone()).unwrap(),
        })
        .collect();
    Game::new(names(m), players, costs).unwrap()
}

/// Random `k`-integral feasible profile of `g`.
pub fn random_profile(rng: &mut impl Rng, g: &Game, k: &Rational) -> Profile {
    let rows: Vec<Vec<Rational>> = (0..g.n())
        .map(|i| {
            let p = g.player(i);
            random_packet_point(rng, &p.polymatroid, &p.demand, k)
        })
        .collect();
    Profile::from_exact(k.clone(), &rows).unwrap()
}

pub fn exact_rows(x: &Profile) -> Vec<Vec<Rational>> {
    (0..x.n()).map(|i| x.exact_player_loads(i).unwrap()).collect()
}

/// All points of the base polytope of rank `d` whose loads are multiples
/// of `k` (brute force over packet counts).
pub fn integral_strategies(p: &Polymatroid, d: &Rational, k: &Rational) -> Vec<Vec<Rational>> {
    let m = p.ground_size();
    let packets = d.multiple_of(k).unwrap() as usize;
    let mut out = Vec::new();
    let mut counts = vec![0usize; m];
    fn rec(
        e: usize,
        left: usize,
        counts: &mut Vec<usize>,
        out: &mut Vec<Vec<Rational>>,
        p: &Polymatroid,
        d: &Rational,
        k: &Rational,
    ) {
        let m = counts.len();
        if e + 1 == m {
            counts[e] = left;
            let x: Vec<Rational> = counts
                .iter()
                .map(|&c| k * &Rational::from_integer(c as i64))
                .collect();
            if p.is_in_base(d, &x).unwrap() {
                out.push(x);
            }
            return;
        }
        for c in 0..=left {
            counts[e] = c;
            rec(e + 1, left - c, counts, out, p, d, k);
        }
    }
    rec(0, packets, &mut counts, &mut out, p, d, k);
    out
}

/// Largest gain any player obtains from a unilateral deviation to another
/// `k`-integral strategy, by full enumeration.
pub fn max_integral_deviation_gain(g: &Game, x: &Profile, k: &Rational) -> f64 {
    let loads = x.loads();
    let mut best = f64::NEG_INFINITY;
    for i in 0..g.n() {
        let p = g.player(i);
        let current = g.player_cost_at(&loads, i);
        let others = loads.others(i);
        for y in integral_strategies(&p.polymatroid, &p.demand, k) {
            let yf: Vec<f64> = y.iter().map(Rational::to_f64).collect();
            best = best.max(current - g.cost_against(i, &yf, &others));
        }
    }
    best
}

pub fn loads_f64(rows: &[Vec<Rational>]) -> Loads {
    Loads::new(
        rows.iter()
            .map(|r| r.iter().map(Rational::to_f64).collect())
            .collect(),
    )
}
