mod common;

use common::{names, random_game, random_profile, random_vertex, rng};
use polysplit::game::{CostFunction, Game, Player};
use polysplit::poly::Polymatroid;
use polysplit::rational::Rational;
use polysplit::verify::{continuous_best_response, epsilon_gap, gradient_decomposition, transshipment};
use rand::Rng;

fn random_simplex_player_game(rng: &mut impl Rng, m: usize) -> Game {
    let costs = vec![(0..m)
        .map(|_| {
            let c: Vec<f64> = (0..3).map(|_| rng.gen_range(0..4) as f64 / 2.0).collect();
            CostFunction::new(c).unwrap()
        })
        .collect()];
    let all: Vec<usize> = (0..m).collect();
    let player = Player {
        demand: Rational::one(),
        polymatroid: Polymatroid::simplex(m, &all, Rational::one()).unwrap(),
    };
    Game::new(names(m), vec![player], costs).unwrap()
}

/// Minimum of `own -> pi_0(own, others)` over the unit simplex on a grid.
fn grid_minimum(g: &Game, others: &[f64], step: f64) -> f64 {
    let m = g.m();
    let steps = (1.0 / step).round() as usize;
    let mut best = f64::INFINITY;
    match m {
        2 => {
            for a in 0..=steps {
                let y0 = a as f64 * step;
                best = best.min(g.cost_against(0, &[y0, 1.0 - y0], others));
            }
        }
        3 => {
            for a in 0..=steps {
                for b in 0..=steps - a {
                    let (y0, y1) = (a as f64 * step, b as f64 * step);
                    best = best.min(g.cost_against(0, &[y0, y1, 1.0 - y0 - y1], others));
                }
            }
        }
        _ => unreachable!(),
    }
    best
}

#[test]
fn best_response_agrees_with_grid_search() {
    let mut rng = rng(41);
    let step = 1e-3;
    let tol = 1e-8;
    for round in 0..24 {
        let m = if round % 4 == 0 { 3 } else { 2 };
        let g = random_simplex_player_game(&mut rng, m);
        let others: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..2.0)).collect();
        let y = continuous_best_response(&g, 0, &others, tol, None).unwrap();
        assert!(g.player(0).polymatroid.is_in_base_approx(1.0, &y, 1e-9));
        let value = g.cost_against(0, &y, &others);
        let grid = grid_minimum(&g, &others, step);
        // slope of pi along the simplex bounds the grid error
        let slope: f64 = (0..m)
            .map(|e| g.cost(0, e).eval(3.0) + 3.0 * g.cost(0, e).derivative(3.0))
            .fold(0.0, f64::max);
        assert!(value <= grid + tol, "{value} above grid minimum {grid}");
        assert!(grid <= value + tol + 2.0 * slope * step, "{grid} vs {value}");
    }
}

#[test]
fn gaps_are_nonnegative_and_witnesses_feasible() {
    let mut rng = rng(42);
    for _ in 0..40 {
        let n = rng.gen_range(1..=3);
        let m = rng.gen_range(2..=4);
        let g = random_game(&mut rng, n, m, 1);
        let x = random_profile(&mut rng, &g, &Rational::new(1, 2));
        let cert = epsilon_gap(&g, &x, 1e-7).unwrap();
        assert_eq!(cert.max_gap, cert.gaps.iter().copied().fold(0.0, f64::max));
        let loads = x.loads();
        for i in 0..n {
            assert!(cert.gaps[i] >= 0.0);
            let p = g.player(i);
            assert!(p.polymatroid.is_in_base_approx(p.demand.to_f64(), &cert.witnesses[i], 1e-9));
            let others = loads.others(i);
            let claimed = g.cost_against(i, loads.player(i), &others)
                - g.cost_against(i, &cert.witnesses[i], &others);
            assert!((claimed.max(0.0) - cert.gaps[i]).abs() <= 1e-7);
        }
    }
}

/// Random point of the base polytope: a convex combination of three
/// random vertices with rational weights.
fn random_base_point(rng: &mut impl Rng, p: &Polymatroid, d: &Rational) -> Vec<Rational> {
    let weights: Vec<i64> = (0..3).map(|_| rng.gen_range(0..=4)).collect();
    let total: i64 = weights.iter().sum::<i64>().max(1);
    let mut y = vec![Rational::zero(); p.ground_size()];
    let mut used = 0;
    for &w in &weights {
        let v = random_vertex(rng, p, d);
        let c = Rational::new(w, total);
        for (a, b) in y.iter_mut().zip(&v) {
            *a = &*a + &(&c * b);
        }
        used += w;
    }
    if used == 0 {
        return random_vertex(rng, p, d);
    }
    y
}

#[test]
fn transshipments_and_gradient_identity() {
    let mut rng = rng(43);
    for family in ["explicit", "simplex"] {
        let mut pairs = 0;
        while pairs < 500 {
            let n = rng.gen_range(1..=2);
            let m = rng.gen_range(2..=4);
            let g = if family == "explicit" {
                random_game(&mut rng, n, m, 1)
            } else {
                let demands: Vec<Rational> =
                    (0..n).map(|_| Rational::from_integer(rng.gen_range(1..=3))).collect();
                let costs = (0..n)
                    .map(|_| (0..m).map(|_| common::random_cost(&mut rng)).collect())
                    .collect();
                common::singleton_game(&demands, costs)
            };
            let x = random_profile(&mut rng, &g, &Rational::new(1, 2));
            for i in 0..n {
                let p = g.player(i);
                let xi = x.exact_player_loads(i).unwrap();
                let y = random_base_point(&mut rng, &p.polymatroid, &p.demand);
                let t = transshipment(&p.polymatroid, &p.demand, &xi, &y).unwrap();
                assert!(t.is_valid(), "invalid transshipment {t:?}");
                let supply: Rational = t.supplies.iter().sum();
                let demand: Rational = t.demands.iter().sum();
                assert_eq!(supply, demand);
                let (lhs, rhs) = gradient_decomposition(&g, &x, i, &y).unwrap();
                assert!((lhs - rhs).abs() <= 1e-9, "{lhs} vs {rhs}");
                pairs += 1;
            }
        }
    }
}

#[test]
fn transshipment_rejects_points_outside_the_polytope() {
    let p = Polymatroid::simplex(2, &[0, 1], Rational::one()).unwrap();
    let x = vec![Rational::one(), Rational::zero()];
    let y = vec![Rational::one(), Rational::one()];
    assert!(transshipment(&p, &Rational::one(), &x, &y).is_err());
}
