//! Multimarket Cournot oligopolies and their transformation into
//! atomic splittable singleton congestion games.
//!
//! Each firm becomes a player whose demand bounds its total production.
//! The player may route load to its markets (cost `C - p(t)`) or to a
//! private slack resource (cost `C + c_i (t - 2 d_i)`) which absorbs the
//! unproduced part of the demand. Utilities and costs then differ by a
//! per-firm constant, so equilibria and deviation gains transfer exactly.

use crate::error::{Error, Result};
use crate::game::{CostFunction, Game, Player};
use crate::integral::{solve_approx_with, ApproxSolution, SolveOptions};
use crate::poly::Polymatroid;
use crate::rational::Rational;

/// Demands are rounded up to multiples of `1 / DEMAND_DENOMINATOR`.
pub const DEMAND_DENOMINATOR: i64 = 4;

/// Inverse demand of one firm in one market.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PriceFunction {
    /// `p(t) = a - b t`.
    Affine { a: f64, b: f64 },
    /// `p(t) = a - b t - c t^2`.
    Quadratic { a: f64, b: f64, c: f64 },
}

impl PriceFunction {
    pub fn affine(a: f64, b: f64) -> Result<Self> {
        if !a.is_finite() || !(b > 0.0) || !b.is_finite() {
            return Err(Error::input(format!("affine price needs finite a and b > 0, got ({a}, {b})")));
        }
        Ok(PriceFunction::Affine { a, b })
    }

    pub fn quadratic(a: f64, b: f64, c: f64) -> Result<Self> {
        let ok = a.is_finite() && b.is_finite() && c.is_finite() && b >= 0.0 && c >= 0.0;
        if !ok || (b == 0.0 && c == 0.0) {
            return Err(Error::input(format!(
                "quadratic price needs finite a, b >= 0, c >= 0, (b, c) != 0, got ({a}, {b}, {c})"
            )));
        }
        Ok(PriceFunction::Quadratic { a, b, c })
    }

    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            PriceFunction::Affine { a, b } => a - b * t,
            PriceFunction::Quadratic { a, b, c } => a - b * t - c * t * t,
        }
    }

    pub fn intercept(&self) -> f64 {
        match *self {
            PriceFunction::Affine { a, .. } | PriceFunction::Quadratic { a, .. } => a,
        }
    }

    /// Largest zero of the price function.
    pub fn root(&self) -> f64 {
        match *self {
            PriceFunction::Affine { a, b } => a / b,
            PriceFunction::Quadratic { a, b, c } if c == 0.0 => a / b,
            PriceFunction::Quadratic { a, b, c } => {
                let disc = (b * b + 4.0 * a * c).max(0.0);
                // numerically stable form of (-b + sqrt(disc)) / (2c)
                2.0 * a / (b + disc.sqrt())
            }
        }
    }

    /// `C - p(t)` as a cost polynomial.
    fn shifted_cost(&self, shift: f64) -> Result<CostFunction> {
        match *self {
            PriceFunction::Affine { a, b } => CostFunction::new(vec![shift - a, b]),
            PriceFunction::Quadratic { a, b, c } => CostFunction::new(vec![shift - a, b, c]),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Firm {
    pub name: String,
    /// `c_i` in the production cost `C_i(t) = c_i t^2`.
    pub production_cost: f64,
    /// Accessible markets (by index) with this firm's price there, in
    /// ascending market order.
    pub prices: Vec<(usize, PriceFunction)>,
}

impl Firm {
    pub fn markets(&self) -> impl Iterator<Item = usize> + '_ {
        self.prices.iter().map(|(e, _)| *e)
    }

    fn price(&self, e: usize) -> Option<&PriceFunction> {
        self.prices.iter().find(|(m, _)| *m == e).map(|(_, p)| p)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Oligopoly {
    markets: Vec<String>,
    firms: Vec<Firm>,
}

impl Oligopoly {
    pub fn new(markets: Vec<String>, mut firms: Vec<Firm>) -> Result<Self> {
        for f in firms.iter_mut() {
            if f.prices.is_empty() {
                return Err(Error::input(format!("firm {} has no accessible market", f.name)));
            }
            if !(f.production_cost >= 0.0) || !f.production_cost.is_finite() {
                return Err(Error::input(format!(
                    "firm {}: production cost coefficient must be finite and >= 0",
                    f.name
                )));
            }
            f.prices.sort_by_key(|(e, _)| *e);
            for w in f.prices.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(Error::input(format!("firm {}: market listed twice", f.name)));
                }
            }
            if let Some((e, _)) = f.prices.iter().find(|(e, _)| *e >= markets.len()) {
                return Err(Error::input(format!("firm {}: unknown market index {e}", f.name)));
            }
        }
        Ok(Oligopoly { markets, firms })
    }

    pub fn markets(&self) -> &[String] {
        &self.markets
    }

    pub fn firms(&self) -> &[Firm] {
        &self.firms
    }

    /// `u_i(x) = sum_e p_{i,e}(x_e) x_{i,e} - c_i (sum_e x_{i,e})^2` for
    /// every firm; `x[i][e]` is firm `i`'s quantity in market `e`.
    pub fn firm_utility(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        if x.len() != self.firms.len() || x.iter().any(|r| r.len() != self.markets.len()) {
            return Err(Error::input("quantity matrix has the wrong shape"));
        }
        let totals: Vec<f64> = (0..self.markets.len())
            .map(|e| x.iter().map(|r| r[e]).sum())
            .collect();
        self.firms
            .iter()
            .zip(x)
            .map(|(firm, row)| {
                let mut revenue = 0.0;
                let mut produced = 0.0;
                for (e, &q) in row.iter().enumerate() {
                    if q < 0.0 {
                        return Err(Error::input(format!("firm {}: negative quantity", firm.name)));
                    }
                    match firm.price(e) {
                        Some(p) => {
                            revenue += p.eval(totals[e]) * q;
                            produced += q;
                        }
                        None if q == 0.0 => {}
                        None => {
                            return Err(Error::input(format!(
                                "firm {} produces in inaccessible market {}",
                                firm.name, self.markets[e]
                            )))
                        }
                    }
                }
                Ok(revenue - firm.production_cost * produced * produced)
            })
            .collect()
    }
}

/// Per-firm link between oligopoly strategies and base-polytope points.
#[derive(Clone, Debug, PartialEq)]
pub struct IsomorphismMap {
    pub market_count: usize,
    /// Resource index of each firm's slack resource.
    pub slack: Vec<usize>,
    pub demand: Vec<Rational>,
    /// `u_i(x) = A_i - pi_i(phi(x))`.
    pub constants: Vec<f64>,
    /// The constant `C` added to every cost.
    pub shift: f64,
}

impl IsomorphismMap {
    /// `phi_i`: market quantities to a strategy over markets and slacks,
    /// with the slack coordinate `d_i - sum_e x_{i,e}`.
    pub fn map_strategy(&self, i: usize, quantities: &[f64]) -> Result<Vec<f64>> {
        if quantities.len() != self.market_count {
            return Err(Error::input("quantity vector has the wrong length"));
        }
        if quantities.iter().any(|&q| !(q >= 0.0)) {
            return Err(Error::input(format!("firm {i}: negative quantity")));
        }
        let produced: f64 = quantities.iter().sum();
        let d = self.demand[i].to_f64();
        if produced > d {
            return Err(Error::input(format!(
                "firm {i}: total quantity {produced} exceeds the cap {d}"
            )));
        }
        let mut y = vec![0.0; self.market_count + self.slack.len()];
        y[..self.market_count].copy_from_slice(quantities);
        y[self.slack[i]] = d - produced;
        Ok(y)
    }

    /// Inverse of [`IsomorphismMap::map_strategy`]: drops the slack entries.
    pub fn unmap_strategy<T: Clone>(&self, _i: usize, y: &[T]) -> Vec<T> {
        y[..self.market_count].to_vec()
    }
}

fn rounded_demand(total_root: f64) -> Rational {
    let scaled = total_root * DEMAND_DENOMINATOR as f64;
    let nearest = scaled.round();
    let units = if (scaled - nearest).abs() <= 1e-9 * nearest.abs().max(1.0) {
        nearest
    } else {
        scaled.ceil()
    };
    Rational::new(units as i64, DEMAND_DENOMINATOR)
}

/// Builds the isomorphic congestion game. Resources are the markets
/// followed by one slack resource per firm.
pub fn to_congestion_game(o: &Oligopoly) -> Result<(Game, IsomorphismMap)> {
    let n = o.firms.len();
    let mk = o.markets.len();
    let m = mk + n;

    let mut demand = Vec::with_capacity(n);
    for firm in &o.firms {
        let mut total = 0.0;
        for (e, p) in &firm.prices {
            let root = p.root();
            if !(root > 0.0) || !root.is_finite() {
                return Err(Error::input(format!(
                    "firm {}: price in market {} has non-positive root {root}",
                    firm.name, o.markets[*e]
                )));
            }
            total += root;
        }
        demand.push(rounded_demand(total));
    }

    let shift = o
        .firms
        .iter()
        .zip(&demand)
        .flat_map(|(firm, d)| {
            let slack_need = 2.0 * firm.production_cost * d.to_f64();
            firm.prices
                .iter()
                .map(|(_, p)| p.intercept())
                .chain(std::iter::once(slack_need))
        })
        .fold(0.0, f64::max);

    let mut resources = o.markets.clone();
    resources.extend(o.firms.iter().map(|f| format!("slack:{}", f.name)));
    let slack: Vec<usize> = (mk..m).collect();

    let mut players = Vec::with_capacity(n);
    let mut costs = Vec::with_capacity(n);
    for (i, firm) in o.firms.iter().enumerate() {
        let mut allowed: Vec<usize> = firm.markets().collect();
        allowed.push(slack[i]);
        players.push(Player {
            demand: demand[i].clone(),
            polymatroid: Polymatroid::simplex(m, &allowed, demand[i].clone())?,
        });
        let mut row = vec![CostFunction::zero(); m];
        for (e, p) in &firm.prices {
            row[*e] = p.shifted_cost(shift)?;
        }
        let c = firm.production_cost;
        row[slack[i]] = CostFunction::new(vec![shift - 2.0 * c * demand[i].to_f64(), c])?;
        costs.push(row);
    }
    let game = Game::new(resources, players, costs)?;

    // A_i measured at the all-zero production profile.
    let zero_q = vec![vec![0.0; mk]; n];
    let utilities = o.firm_utility(&zero_q)?;
    let mut map = IsomorphismMap {
        market_count: mk,
        slack,
        demand,
        constants: Vec::new(),
        shift,
    };
    let mut loads = Vec::with_capacity(n);
    for i in 0..n {
        loads.push(map.map_strategy(i, &zero_q[i])?);
    }
    let loads = crate::game::Loads::new(loads);
    map.constants = (0..n)
        .map(|i| utilities[i] + game.player_cost_at(&loads, i))
        .collect();
    Ok((game, map))
}

#[derive(Clone, Debug)]
pub struct CournotSolution {
    pub game: Game,
    pub map: IsomorphismMap,
    /// `quantities[i][e]`, exact.
    pub quantities: Vec<Vec<Rational>>,
    pub solution: ApproxSolution,
}

impl CournotSolution {
    pub fn quantities_f64(&self) -> Vec<Vec<f64>> {
        self.quantities
            .iter()
            .map(|r| r.iter().map(Rational::to_f64).collect())
            .collect()
    }
}

pub fn solve_cournot(o: &Oligopoly, epsilon: f64) -> Result<CournotSolution> {
    solve_cournot_with(o, epsilon, epsilon / 100.0, &SolveOptions::default())
}

/// Transforms, solves the congestion game to accuracy `epsilon`, and maps
/// the equilibrium back to quantities. The certificate's gaps are utility
/// gains available to each firm.
pub fn solve_cournot_with(
    o: &Oligopoly,
    epsilon: f64,
    tol: f64,
    opts: &SolveOptions,
) -> Result<CournotSolution> {
    let (game, map) = to_congestion_game(o)?;
    let solution = solve_approx_with(&game, epsilon, tol, opts)?;
    let quantities = (0..game.n())
        .map(|i| {
            let exact = solution
                .equilibrium
                .profile
                .exact_player_loads(i)
                .expect("integral equilibrium");
            map.unmap_strategy(i, &exact)
        })
        .collect();
    Ok(CournotSolution {
        game,
        map,
        quantities,
        solution,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn monopoly(c: f64) -> Oligopoly {
        Oligopoly::new(
            vec!["m".into()],
            vec![Firm {
                name: "f".into(),
                production_cost: c,
                prices: vec![(0, PriceFunction::affine(10.0, 1.0).unwrap())],
            }],
        )
        .unwrap()
    }

    fn duopoly() -> Oligopoly {
        let firm = |name: &str| Firm {
            name: name.into(),
            production_cost: 0.0,
            prices: vec![(0, PriceFunction::affine(10.0, 1.0).unwrap())],
        };
        Oligopoly::new(vec!["m".into()], vec![firm("a"), firm("b")]).unwrap()
    }

    #[test]
    fn utility_examples() {
        assert_eq!(monopoly(0.0).firm_utility(&[vec![5.0]]).unwrap(), vec![25.0]);
        assert_eq!(monopoly(1.0).firm_utility(&[vec![0.0]]).unwrap(), vec![0.0]);
        let u = duopoly().firm_utility(&[vec![10.0 / 3.0], vec![10.0 / 3.0]]).unwrap();
        for ui in u {
            assert!((ui - 100.0 / 9.0).abs() < 1e-12);
        }
        assert!(monopoly(0.0).firm_utility(&[vec![-1.0]]).is_err());
    }

    #[test]
    fn production_outside_accessible_markets_is_rejected() {
        let o = Oligopoly::new(
            vec!["a".into(), "b".into()],
            vec![Firm {
                name: "f".into(),
                production_cost: 0.0,
                prices: vec![(0, PriceFunction::affine(4.0, 1.0).unwrap())],
            }],
        )
        .unwrap();
        assert!(o.firm_utility(&[vec![1.0, 1.0]]).is_err());
        assert!(o.firm_utility(&[vec![1.0, 0.0]]).is_ok());
    }

    #[test]
    fn monopoly_transformation() {
        let (g, map) = to_congestion_game(&monopoly(1.0)).unwrap();
        assert_eq!(g.demand(0), &Rational::from_integer(10));
        assert_eq!(map.shift, 20.0);
        // slack: C + (t - 20) = t; market: C - (10 - t) = 10 + t
        assert_eq!(g.cost(0, map.slack[0]).coefficients(), &[0.0, 1.0]);
        assert_eq!(g.cost(0, 0).coefficients(), &[10.0, 1.0]);
        assert_eq!(g.resources(), &["m".to_string(), "slack:f".to_string()]);
        // A = C d - c d^2
        assert!((map.constants[0] - (20.0 * 10.0 - 100.0)).abs() < 1e-9);
    }

    #[test]
    fn demand_is_sum_of_roots() {
        let o = Oligopoly::new(
            vec!["a".into(), "b".into()],
            vec![Firm {
                name: "f".into(),
                production_cost: 0.5,
                prices: vec![
                    (0, PriceFunction::affine(3.0, 1.0).unwrap()),
                    (1, PriceFunction::affine(14.0, 2.0).unwrap()),
                ],
            }],
        )
        .unwrap();
        let (g, _) = to_congestion_game(&o).unwrap();
        assert_eq!(g.demand(0), &Rational::from_integer(10));
    }

    #[test]
    fn irrational_roots_round_up_to_quarters() {
        // root of 2 - t^2 is sqrt(2) ~ 1.414 -> 3/2
        let p = PriceFunction::quadratic(2.0, 0.0, 1.0).unwrap();
        assert!((p.root() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(rounded_demand(p.root()), Rational::new(3, 2));
        assert_eq!(rounded_demand(10.000000000001), Rational::from_integer(10));
        assert_eq!(rounded_demand(2.3), Rational::new(5, 2));
    }

    #[test]
    fn non_positive_root_rejected() {
        let o = Oligopoly::new(
            vec!["m".into()],
            vec![Firm {
                name: "dead".into(),
                production_cost: 0.0,
                prices: vec![(0, PriceFunction::affine(0.0, 1.0).unwrap())],
            }],
        )
        .unwrap();
        assert!(matches!(to_congestion_game(&o), Err(Error::Input(_))));
        assert!(matches!(solve_cournot(&o, 0.5), Err(Error::Input(_))));
    }

    #[test]
    fn map_unmap_examples() {
        let (_, map) = to_congestion_game(&monopoly(0.0)).unwrap();
        assert_eq!(map.map_strategy(0, &[0.0]).unwrap(), vec![0.0, 10.0]);
        assert_eq!(map.map_strategy(0, &[2.5]).unwrap(), vec![2.5, 7.5]);
        assert!(map.map_strategy(0, &[10.5]).is_err());
        assert_eq!(map.unmap_strategy(0, &[2.5, 7.5]), vec![2.5]);
    }

    #[test]
    fn firm_validation() {
        assert!(PriceFunction::affine(1.0, 0.0).is_err());
        assert!(PriceFunction::quadratic(1.0, 0.0, 0.0).is_err());
        assert!(PriceFunction::quadratic(1.0, -1.0, 1.0).is_err());
        let no_market = Firm { name: "x".into(), production_cost: 0.0, prices: vec![] };
        assert!(Oligopoly::new(vec!["m".into()], vec![no_market]).is_err());
    }
}
