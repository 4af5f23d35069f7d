//! Polymatroids given by rank oracles, and the exact operations on their
//! base polytopes that the solvers need: membership, exchange capacities,
//! greedy linear minimization and the common rank granularity.
//!
//! Resources are identified by their index `0..m` in the ground set.

use std::fmt;

use crate::error::{Error, Result};
use crate::rational::Rational;

/// Largest ground set for which explicit rank tables are accepted.
pub const MAX_EXPLICIT_RESOURCES: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub enum RankOracle {
    /// `rank(U) = rank` if `U` meets the allowed set, else 0.
    Simplex { allowed: Vec<bool>, rank: Rational },
    /// Complete table indexed by subset bitmask (bit `e` set iff `e` in `U`).
    Explicit { table: Vec<Rational> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Polymatroid {
    m: usize,
    oracle: RankOracle,
}

/// First failed polymatroid axiom found by [`Polymatroid::validate`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    NotNormalized { empty_rank: Rational },
    NotMonotone { subset: Vec<usize>, superset: Vec<usize> },
    NotSubmodular { u: Vec<usize>, v: Vec<usize> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NotNormalized { empty_rank } => {
                write!(f, "rank of the empty set is {empty_rank}, expected 0")
            }
            Violation::NotMonotone { subset, superset } => {
                write!(f, "rank{subset:?} > rank{superset:?} (not monotone)")
            }
            Violation::NotSubmodular { u, v } => write!(
                f,
                "rank{u:?} + rank{v:?} < rank(union) + rank(intersection) (not submodular)"
            ),
        }
    }
}

pub(crate) fn mask_to_vec(mask: u32) -> Vec<usize> {
    (0..32).filter(|b| mask >> b & 1 == 1).collect()
}

/// `sums[mask] = x(U)` for every subset of a ground set of size `x.len()`.
pub(crate) fn subset_sums<T>(x: &[T]) -> Vec<T>
where
    T: Clone + Default + for<'a> std::ops::Add<&'a T, Output = T>,
{
    let size = 1usize << x.len();
    let mut sums = vec![T::default(); size];
    for mask in 1..size {
        let low = mask.trailing_zeros() as usize;
        sums[mask] = sums[mask & (mask - 1)].clone() + &x[low];
    }
    sums
}

impl Polymatroid {
    pub fn simplex(m: usize, allowed: &[usize], rank: Rational) -> Result<Self> {
        if rank.is_negative() {
            return Err(Error::input(format!("negative simplex rank {rank}")));
        }
        let mut flags = vec![false; m];
        for &e in allowed {
            if e >= m {
                return Err(Error::input(format!("unknown resource index {e} (m = {m})")));
            }
            flags[e] = true;
        }
        Ok(Polymatroid {
            m,
            oracle: RankOracle::Simplex { allowed: flags, rank },
        })
    }

    /// `table[mask]` is the rank of the subset encoded by `mask`.
    pub fn explicit(m: usize, table: Vec<Rational>) -> Result<Self> {
        if m > MAX_EXPLICIT_RESOURCES {
            return Err(Error::input(format!(
                "explicit rank tables support at most {MAX_EXPLICIT_RESOURCES} resources, got {m}"
            )));
        }
        if table.len() != 1 << m {
            return Err(Error::input(format!(
                "incomplete rank table: {} entries for {} subsets",
                table.len(),
                1u64 << m
            )));
        }
        Ok(Polymatroid {
            m,
            oracle: RankOracle::Explicit { table },
        })
    }

    /// Builds an explicit oracle from `(subset, rank)` entries, which must
    /// cover every subset exactly once.
    pub fn explicit_from_entries<I>(m: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<usize>, Rational)>,
    {
        if m > MAX_EXPLICIT_RESOURCES {
            return Err(Error::input(format!(
                "explicit rank tables support at most {MAX_EXPLICIT_RESOURCES} resources, got {m}"
            )));
        }
        let mut table: Vec<Option<Rational>> = vec![None; 1 << m];
        for (subset, value) in entries {
            let mask = Self::mask_of(m, &subset)?;
            if table[mask as usize].replace(value).is_some() {
                return Err(Error::input(format!("duplicate rank entry for {subset:?}")));
            }
        }
        let table = table
            .into_iter()
            .enumerate()
            .map(|(mask, v)| {
                v.ok_or_else(|| {
                    Error::input(format!(
                        "incomplete rank table: missing subset {:?}",
                        mask_to_vec(mask as u32)
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::explicit(m, table)
    }

    fn mask_of(m: usize, subset: &[usize]) -> Result<u32> {
        let mut mask = 0u32;
        for &e in subset {
            if e >= m {
                return Err(Error::input(format!("unknown resource index {e} (m = {m})")));
            }
            mask |= 1 << e;
        }
        Ok(mask)
    }

    pub fn ground_size(&self) -> usize {
        self.m
    }

    pub fn oracle(&self) -> &RankOracle {
        &self.oracle
    }

    pub fn rank(&self, subset: &[usize]) -> Result<Rational> {
        if let Some(&e) = subset.iter().find(|&&e| e >= self.m) {
            return Err(Error::input(format!(
                "unknown resource index {e} (m = {})",
                self.m
            )));
        }
        Ok(match &self.oracle {
            RankOracle::Simplex { allowed, rank } => {
                if subset.iter().any(|&e| allowed[e]) {
                    rank.clone()
                } else {
                    Rational::zero()
                }
            }
            RankOracle::Explicit { table } => {
                table[Self::mask_of(self.m, subset)? as usize].clone()
            }
        })
    }

    /// `rank(E)`.
    pub fn full_rank(&self) -> Rational {
        match &self.oracle {
            RankOracle::Simplex { allowed, rank } => {
                if allowed.iter().any(|&a| a) {
                    rank.clone()
                } else {
                    Rational::zero()
                }
            }
            RankOracle::Explicit { table } => table[table.len() - 1].clone(),
        }
    }

    /// Whether resource `e` can carry load at all (`rank({e}) > 0`).
    pub fn usable(&self, e: usize) -> bool {
        match &self.oracle {
            RankOracle::Simplex { allowed, rank } => allowed[e] && rank.is_positive(),
            RankOracle::Explicit { table } => table[1 << e].is_positive(),
        }
    }

    /// Every rank value the oracle can take (with repetitions removed).
    pub fn rank_values(&self) -> Vec<Rational> {
        let mut values = match &self.oracle {
            RankOracle::Simplex { rank, .. } => vec![Rational::zero(), rank.clone()],
            RankOracle::Explicit { table } => table.clone(),
        };
        values.sort();
        values.dedup();
        values
    }

    /// Checks normalization, monotonicity and submodularity exhaustively.
    ///
    /// Uses the local forms `rank(U) <= rank(U + a)` and
    /// `rank(U + a) + rank(U + b) >= rank(U + a + b) + rank(U)`, which are
    /// equivalent to the global axioms. The first violated pair is reported.
    pub fn validate(&self) -> std::result::Result<(), Violation> {
        let table = match &self.oracle {
            RankOracle::Simplex { .. } => return Ok(()),
            RankOracle::Explicit { table } => table,
        };
        if !table[0].is_zero() {
            return Err(Violation::NotNormalized {
                empty_rank: table[0].clone(),
            });
        }
        let full = (1u32 << self.m) - 1;
        for mask in 0..=full {
            for a in 0..self.m {
                let ma = mask | 1 << a;
                if ma == mask {
                    continue;
                }
                if table[mask as usize] > table[ma as usize] {
                    return Err(Violation::NotMonotone {
                        subset: mask_to_vec(mask),
                        superset: mask_to_vec(ma),
                    });
                }
            }
        }
        for mask in 0..=full {
            for a in 0..self.m {
                if mask >> a & 1 == 1 {
                    continue;
                }
                for b in (a + 1)..self.m {
                    if mask >> b & 1 == 1 {
                        continue;
                    }
                    let ua = (mask | 1 << a) as usize;
                    let ub = (mask | 1 << b) as usize;
                    let uab = (mask | 1 << a | 1 << b) as usize;
                    if &table[ua] + &table[ub] < &table[uab] + &table[mask as usize] {
                        return Err(Violation::NotSubmodular {
                            u: mask_to_vec(ua as u32),
                            v: mask_to_vec(ub as u32),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    fn check_len<T>(&self, x: &[T]) -> Result<()> {
        if x.len() != self.m {
            return Err(Error::input(format!(
                "load vector has {} entries, ground set has {}",
                x.len(),
                self.m
            )));
        }
        Ok(())
    }

    /// Exact membership of `x` in the base polytope of rank `d`.
    pub fn is_in_base(&self, d: &Rational, x: &[Rational]) -> Result<bool> {
        self.check_len(x)?;
        if d > &self.full_rank() {
            return Err(Error::input(format!(
                "demand {d} exceeds full rank {}",
                self.full_rank()
            )));
        }
        if x.iter().any(Rational::is_negative) {
            return Ok(false);
        }
        if &x.iter().sum::<Rational>() != d {
            return Ok(false);
        }
        Ok(match &self.oracle {
            RankOracle::Simplex { allowed, .. } => x
                .iter()
                .zip(allowed)
                .all(|(xe, &ok)| ok || xe.is_zero()),
            RankOracle::Explicit { table } => subset_sums(x)
                .iter()
                .zip(table)
                .all(|(load, rank)| load <= rank),
        })
    }

    /// Approximate membership for binary64 loads; every constraint may be
    /// violated by at most `tol`.
    pub fn is_in_base_approx(&self, d: f64, x: &[f64], tol: f64) -> bool {
        if x.len() != self.m || x.iter().any(|&v| !(v >= -tol)) {
            return false;
        }
        if (x.iter().sum::<f64>() - d).abs() > tol {
            return false;
        }
        match &self.oracle {
            RankOracle::Simplex { allowed, rank } => {
                d <= rank.to_f64() + tol
                    && x.iter().zip(allowed).all(|(&v, &ok)| ok || v.abs() <= tol)
            }
            RankOracle::Explicit { table } => subset_sums(x)
                .iter()
                .zip(table)
                .all(|(&load, rank)| load <= rank.to_f64() + tol),
        }
    }

    /// Largest `alpha` with `x + alpha (chi_e - chi_f)` in the base polytope
    /// (load moves from `f` to `e`). Zero when no positive exchange exists.
    ///
    /// `x` must lie in the base polytope; the demand is `x(E)`.
    pub fn exchange_capacity(&self, x: &[Rational], e: usize, f: usize) -> Rational {
        assert!(e != f && e < self.m && f < self.m && x.len() == self.m);
        match &self.oracle {
            RankOracle::Simplex { allowed, .. } => {
                if allowed[e] {
                    x[f].clone()
                } else {
                    Rational::zero()
                }
            }
            RankOracle::Explicit { table } => {
                let sums = subset_sums(x);
                let mut best = x[f].clone();
                for (mask, (load, rank)) in sums.iter().zip(table).enumerate() {
                    if mask >> e & 1 == 1 && mask >> f & 1 == 0 {
                        let slack = rank - load;
                        if slack < best {
                            best = slack;
                        }
                    }
                }
                if best.is_negative() {
                    Rational::zero()
                } else {
                    best
                }
            }
        }
    }

    /// A vertex of the base polytope minimizing `w . x`, by the greedy
    /// algorithm (ascending weight, ties by resource index).
    pub fn greedy_linear_min(&self, d: &Rational, w: &[f64]) -> Result<Vec<Rational>> {
        self.check_len(w)?;
        if d > &self.full_rank() {
            return Err(Error::input(format!(
                "demand {d} exceeds full rank {}",
                self.full_rank()
            )));
        }
        let mut order: Vec<usize> = (0..self.m).collect();
        order.sort_by(|&a, &b| w[a].total_cmp(&w[b]).then(a.cmp(&b)));

        let mut x = vec![Rational::zero(); self.m];
        let mut remaining = d.clone();
        let mut prefix_rank = Rational::zero();
        let mut prefix_mask = 0usize;
        let mut hit_allowed = false;
        for &e in &order {
            if !remaining.is_positive() {
                break;
            }
            let rank_with = match &self.oracle {
                RankOracle::Simplex { allowed, rank } => {
                    hit_allowed |= allowed[e];
                    if hit_allowed {
                        rank.clone()
                    } else {
                        Rational::zero()
                    }
                }
                RankOracle::Explicit { table } => {
                    prefix_mask |= 1 << e;
                    table[prefix_mask].clone()
                }
            };
            let step = (&rank_with - &prefix_rank).min(remaining.clone());
            remaining -= &step;
            x[e] = step;
            prefix_rank = rank_with;
        }
        Ok(x)
    }
}

/// Largest rational `a <= 1` such that every value is an integer multiple of
/// `a`. Zeros are skipped; an empty list yields 1.
pub fn rho_gcd<'a, I>(values: I) -> Rational
where
    I: IntoIterator<Item = &'a Rational>,
{
    let g = values
        .into_iter()
        .filter(|v| !v.is_zero())
        .fold(None::<Rational>, |acc, v| {
            Some(match acc {
                None => v.abs(),
                Some(g) => g.gcd(v),
            })
        });
    match g {
        None => Rational::one(),
        // Common divisors of the values are exactly g/q for positive integers q.
        Some(g) if g > Rational::one() => &g / &g.ceil(),
        Some(g) => g,
    }
}
