//! Quasi-locality and approximability measurements.
//!
//! For an operator `T` on `ℓ²(X; C^d)` and a radius `R`, the quasi-locality
//! violation is `sup ‖χ_B T χ_A‖` over pairs with `d(A, B) > R`. Exact mode
//! enumerates only mutually maximal separated pairs; bounds mode brackets the
//! supremum between a local-search lower bound and the sum of the norms of
//! the far band parts.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coarse_maps::CoarseMap;
use crate::error::{Error, Result};
use crate::linalg::{spectral_norm, CMat, CVec, C64};
use crate::metric_space::{FiniteMetricSpace, PointSet};
use crate::operators::{BlockOperator, FiberedSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Exact,
    Bounds,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalityConfig {
    /// Largest base space handled by exact enumeration.
    pub exact_limit: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for LocalityConfig {
    fn default() -> Self {
        Self {
            exact_limit: 16,
            restarts: 50,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparatedPair {
    /// Column set (source side).
    pub a: Vec<usize>,
    /// Row set (target side).
    pub b: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalityReport {
    pub radius: f64,
    pub violation_lower: f64,
    pub violation_upper: f64,
    pub exact: bool,
    pub witness: Option<SeparatedPair>,
}

fn common_base(t: &BlockOperator) -> Result<&FiniteMetricSpace> {
    if t.source().base() != t.target().base() {
        return Err(Error::InvalidArgument(
            "quasi-locality needs source and target over the same base".into(),
        ));
    }
    Ok(t.source().base())
}

fn mask_to_set(mask: u32) -> PointSet {
    (0..32).filter(|&i| mask >> i & 1 == 1).collect()
}

/// Dense submatrix on the fibers of `rows × cols`, read from a dense `T`.
fn submatrix(
    dense: &CMat,
    target: &FiberedSpace,
    source: &FiberedSpace,
    rows: &[usize],
    cols: &[usize],
) -> CMat {
    let ri: Vec<usize> = rows.iter().flat_map(|&y| target.range(y)).collect();
    let ci: Vec<usize> = cols.iter().flat_map(|&x| source.range(x)).collect();
    CMat::from_fn(ri.len(), ci.len(), |i, j| dense[(ri[i], ci[j])])
}

/// Exact violation by enumeration of closed sets `B = far(far(S))`,
/// `A = far(B)`, where `far(S) = X ∖ N_R(S)`. Any separated pair is dominated
/// by such a pair, and corner norms are monotone in both sets.
fn exact_violation(t: &BlockOperator, base: &FiniteMetricSpace, radius: f64) -> (f64, Option<SeparatedPair>) {
    let n = base.len();
    let full: u32 = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
    let near: Vec<u32> = (0..n)
        .map(|x| (0..n).filter(|&p| base.dist(x, p) <= radius).fold(0u32, |m, p| m | 1 << p))
        .collect();
    let far = |s: u32| -> u32 {
        let mut cover = 0u32;
        let mut rest = s;
        while rest != 0 {
            let i = rest.trailing_zeros() as usize;
            cover |= near[i];
            rest &= rest - 1;
        }
        full & !cover
    };
    let closed: BTreeSet<u32> = (0..=full).map(|s| far(far(s))).collect();
    let dense = t.to_dense();
    let (src, tgt) = (t.source(), t.target());
    let best = closed
        .into_iter()
        .collect::<Vec<_>>()
        .into_par_iter()
        .filter_map(|b| {
            let a = far(b);
            if a == 0 || b == 0 {
                return None;
            }
            let rows: Vec<usize> = mask_to_set(b).into_iter().collect();
            let cols: Vec<usize> = mask_to_set(a).into_iter().collect();
            let v = spectral_norm(&submatrix(&dense, tgt, src, &rows, &cols));
            Some((v, b, a))
        })
        .reduce_with(|p, q| if p.0 > q.0 || (p.0 == q.0 && p.1 <= q.1) { p } else { q });
    match best {
        Some((v, b, a)) if v > 0.0 => (
            v,
            Some(SeparatedPair {
                a: mask_to_set(a).into_iter().collect(),
                b: mask_to_set(b).into_iter().collect(),
            }),
        ),
        _ => (0.0, None),
    }
}

/// Top singular triple of a dense matrix (via SVD; matrices here are corners).
fn top_triple(m: &CMat) -> (f64, CVec, CVec) {
    if m.nrows() == 0 || m.ncols() == 0 {
        return (0.0, CVec::zeros(m.nrows()), CVec::zeros(m.ncols()));
    }
    let svd = m.clone().svd(true, true);
    let (k, s) = svd
        .singular_values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
    let u = svd.u.as_ref().expect("u").column(k).into_owned();
    let v = svd.v_t.as_ref().expect("v_t").row(k).adjoint();
    (s, u, v)
}

/// Greedy growth from a separated singleton pair. Each step adds the point
/// whose guaranteed norm gain `‖u* c‖²` (new column `c`) or `‖r v‖²` (new row
/// `r`) is largest, so the corner norm strictly increases until no candidate
/// improves the current top singular pair.
fn grow(
    dense: &CMat,
    t: &BlockOperator,
    base: &FiniteMetricSpace,
    radius: f64,
    start: (usize, usize),
) -> (f64, Vec<usize>, Vec<usize>) {
    let (src, tgt) = (t.source(), t.target());
    let n = base.len();
    let mut cols = vec![start.0];
    let mut rows = vec![start.1];
    loop {
        let m = submatrix(dense, tgt, src, &rows, &cols);
        let (sigma, u, v) = top_triple(&m);
        // u* T restricted to the current rows, as a row over all source coordinates.
        let ri: Vec<usize> = rows.iter().flat_map(|&y| tgt.range(y)).collect();
        let ci: Vec<usize> = cols.iter().flat_map(|&x| src.range(x)).collect();
        let mut best: Option<(f64, bool, usize)> = None;
        for p in 0..n {
            if !cols.contains(&p) && rows.iter().all(|&y| base.dist(p, y) > radius) {
                let gain: f64 = src
                    .range(p)
                    .map(|c| {
                        ri.iter()
                            .enumerate()
                            .map(|(i, &r)| u[i].conj() * dense[(r, c)])
                            .sum::<C64>()
                            .norm_sqr()
                    })
                    .sum();
                if best.is_none_or(|b| gain > b.0) {
                    best = Some((gain, false, p));
                }
            }
            if !rows.contains(&p) && cols.iter().all(|&x| base.dist(p, x) > radius) {
                let gain: f64 = tgt
                    .range(p)
                    .map(|r| {
                        ci.iter()
                            .enumerate()
                            .map(|(j, &c)| dense[(r, c)] * v[j])
                            .sum::<C64>()
                            .norm_sqr()
                    })
                    .sum();
                if best.is_none_or(|b| gain > b.0) {
                    best = Some((gain, true, p));
                }
            }
        }
        match best {
            Some((gain, is_row, p)) if gain > 0.0 && gain > 1e-24 * sigma * sigma => {
                if is_row {
                    rows.push(p);
                } else {
                    cols.push(p);
                }
            }
            _ => {
                cols.sort_unstable();
                rows.sort_unstable();
                return (sigma, cols, rows);
            }
        }
    }
}

fn local_search_lower(
    t: &BlockOperator,
    base: &FiniteMetricSpace,
    radius: f64,
    config: &LocalityConfig,
) -> (f64, Option<SeparatedPair>) {
    let n = base.len();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|x| (0..n).map(move |y| (x, y)))
        .filter(|&(x, y)| base.dist(x, y) > radius)
        .collect();
    let singleton = pairs
        .iter()
        .filter_map(|&(x, y)| t.block(y, x).map(|b| (spectral_norm(b), x, y)))
        .fold(None::<(f64, usize, usize)>, |best, cur| match best {
            Some(b) if b.0 >= cur.0 => Some(b),
            _ => Some(cur),
        });
    let Some((single_norm, x0, y0)) = singleton.filter(|s| s.0 > 0.0) else {
        return (0.0, None);
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut starts = vec![(x0, y0)];
    starts.extend((0..config.restarts).map(|_| pairs[rng.gen_range(0..pairs.len())]));
    let dense = t.to_dense();
    let best = starts
        .par_iter()
        .enumerate()
        .map(|(k, &s)| {
            let (v, a, b) = grow(&dense, t, base, radius, s);
            (v, k, a, b)
        })
        .reduce_with(|p, q| if p.0 > q.0 || (p.0 == q.0 && p.1 <= q.1) { p } else { q })
        .expect("at least one start");
    let (value, _, a, b) = best;
    if value >= single_norm {
        (value, Some(SeparatedPair { a, b }))
    } else {
        (
            single_norm,
            Some(SeparatedPair {
                a: vec![x0],
                b: vec![y0],
            }),
        )
    }
}

/// `Σ_{k > R} ‖D_k‖` over realized distances `k`.
pub fn band_upper_bound(t: &BlockOperator, radius: f64) -> Result<f64> {
    let base = common_base(t)?;
    let mut total = 0.0;
    for k in base.realized_distances() {
        if k > radius {
            total += t.band_part(k)?.norm();
        }
    }
    Ok(total)
}

pub fn quasi_locality_violation(
    t: &BlockOperator,
    radius: f64,
    mode: Mode,
    config: &LocalityConfig,
) -> Result<LocalityReport> {
    let base = common_base(t)?;
    if !(radius >= 0.0) {
        return Err(Error::InvalidArgument(format!("radius {radius} must be >= 0")));
    }
    match mode {
        Mode::Exact => {
            if base.len() > config.exact_limit || base.len() > 32 {
                return Err(Error::TooLarge(format!(
                    "exact enumeration is limited to {} points (got {}); use bounds mode",
                    config.exact_limit,
                    base.len()
                )));
            }
            let (v, witness) = exact_violation(t, base, radius);
            Ok(LocalityReport {
                radius,
                violation_lower: v,
                violation_upper: v,
                exact: true,
                witness,
            })
        }
        Mode::Bounds => {
            let (lower, witness) = local_search_lower(t, base, radius, config);
            let upper = band_upper_bound(t, radius)?;
            Ok(LocalityReport {
                radius,
                violation_lower: lower,
                violation_upper: upper.max(lower),
                exact: false,
                witness,
            })
        }
    }
}

/// Exact mode when the base is small enough, bounds mode otherwise.
pub fn quasi_locality_auto(t: &BlockOperator, radius: f64, config: &LocalityConfig) -> Result<LocalityReport> {
    let n = common_base(t)?.len();
    let mode = if n <= config.exact_limit { Mode::Exact } else { Mode::Bounds };
    quasi_locality_violation(t, radius, mode, config)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub radius: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Brackets the distance from `T` to operators of propagation at most `R`:
/// quasi-locality violation below, truncation error above.
pub fn approximability_window(t: &BlockOperator, radius: f64, config: &LocalityConfig) -> Result<Window> {
    let report = quasi_locality_auto(t, radius, config)?;
    let upper = t.sub(&t.band_truncate(radius)?)?.norm();
    Ok(Window {
        radius,
        lower: report.violation_lower,
        upper,
    })
}

fn check_map(t: &BlockOperator, f: &CoarseMap) -> Result<()> {
    if f.source().as_ref() != t.source().base().as_ref() || f.target().as_ref() != t.target().base().as_ref() {
        return Err(Error::InvalidArgument(
            "map must go from the operator's source base to its target base".into(),
        ));
    }
    Ok(())
}

/// `M_R(T)`: keeps blocks `(y, x)` with `d(f(x), y) <= R`.
pub fn supported_part(t: &BlockOperator, f: &CoarseMap, radius: f64) -> Result<BlockOperator> {
    check_map(t, f)?;
    let tgt = t.target().base().clone();
    Ok(t.filter_blocks(|y, x| tgt.dist(f.apply(x), y) <= radius))
}

/// `‖T − M_R(T)‖`, an upper bound on the distance to `R`-supported operators.
pub fn supported_distance_upper(t: &BlockOperator, f: &CoarseMap, radius: f64) -> Result<f64> {
    check_map(t, f)?;
    let tgt = t.target().base().clone();
    Ok(t.filter_blocks(|y, x| tgt.dist(f.apply(x), y) > radius).norm())
}

/// `max d(f(x), y)` over blocks of norm above `tol`.
pub fn support_radius(t: &BlockOperator, f: &CoarseMap, tol: f64) -> Result<f64> {
    check_map(t, f)?;
    let tgt = t.target().base();
    Ok(t.blocks()
        .iter()
        .filter(|(_, b)| spectral_norm(b) > tol)
        .map(|(&(y, x), _)| tgt.dist(f.apply(x), y))
        .fold(0.0, f64::max))
}
