//! Extraction of a coarse equivalence from a unitary.
//!
//! For `U: ℓ²(X) → ℓ²(Y)` and a threshold `0 < δ < 1`, pick the smallest
//! radius `R` such that every `y` sees some `x` with
//! `‖χ_{B̄(y;R)} U χ_x‖ > δ`, and let `g(y)` be the best such `x`. Running the
//! same procedure on `U*` gives `f: X → Y`. The closeness of `f ∘ g` and
//! `g ∘ f` to the identities is measured directly.

use nalgebra::SymmetricEigen;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::coarse_maps::{certify_equivalence, modulus_profile, CoarseMap};
use crate::concentration::UNITARITY_TOL;
use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::metric_space::PointSet;
use crate::operators::BlockOperator;

pub const DEFAULT_DELTA: f64 = 0.5;

/// Per-column Gram blocks `G[x][y] = U_{yx}* U_{yx}`, so that
/// `‖χ_B U χ_x‖² = λ_max(Σ_{y∈B} G[x][y])`.
pub(crate) struct BallCorners<'a> {
    u: &'a BlockOperator,
    grams: Vec<Vec<Option<CMat>>>,
}

impl<'a> BallCorners<'a> {
    pub(crate) fn new(u: &'a BlockOperator) -> Self {
        let (src, tgt) = (u.source(), u.target());
        let mut grams = vec![vec![None; tgt.len()]; src.len()];
        for (&(y, x), b) in u.blocks() {
            grams[x][y] = Some(b.ad_mul(b));
        }
        Self { u, grams }
    }

    pub(crate) fn norm(&self, rows: &PointSet, x: usize) -> f64 {
        let d = self.u.source().fiber_dim(x);
        let mut acc = CMat::zeros(d, d);
        for &y in rows {
            if let Some(g) = &self.grams[x][y] {
                acc += g;
            }
        }
        hermitian_top(acc).sqrt()
    }

    /// `max_x` and `argmax_x` (ties to the smallest index) of the ball corner.
    pub(crate) fn best(&self, rows: &PointSet) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for x in 0..self.u.source().len() {
            let v = self.norm(rows, x);
            if v > best.1 {
                best = (x, v);
            }
        }
        best
    }
}

fn hermitian_top(m: CMat) -> f64 {
    let v = if m.nrows() == 1 {
        m[(0, 0)].re
    } else {
        SymmetricEigen::new(m).eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    };
    v.max(0.0)
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta {delta} must lie in (0, 1)")));
    }
    Ok(())
}

/// Smallest realized radius at which every `y` has a ball corner above `delta`.
pub fn minimal_radius(u: &BlockOperator, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    u.check_unitary(UNITARITY_TOL)?;
    minimal_radius_unchecked(u, delta)
}

fn minimal_radius_unchecked(u: &BlockOperator, delta: f64) -> Result<f64> {
    let target = u.target().base().clone();
    let radii = target.realized_distances();
    let corners = BallCorners::new(u);
    let per_point: Vec<std::result::Result<f64, (usize, f64)>> = (0..target.len())
        .into_par_iter()
        .map(|y| {
            let mut last = 0.0;
            for &r in &radii {
                let ball: PointSet = (0..target.len()).filter(|&p| target.dist(y, p) <= r).collect();
                let (_, v) = corners.best(&ball);
                if v > delta {
                    return Ok(r);
                }
                last = v;
            }
            Err((y, last))
        })
        .collect();
    let mut radius = 0.0f64;
    for res in per_point {
        match res {
            Ok(r) => radius = radius.max(r),
            Err((y, best)) => return Err(Error::NoAdmissibleRadius { delta, y, best }),
        }
    }
    Ok(radius)
}

/// `g(y) = argmax_x ‖χ_{B̄(y;R)} U χ_x‖` together with the attained norms.
pub fn extract_map(u: &BlockOperator, delta: f64, radius: f64) -> Result<(CoarseMap, Vec<f64>)> {
    check_delta(delta)?;
    u.check_unitary(UNITARITY_TOL)?;
    extract_map_unchecked(u, delta, radius)
}

fn extract_map_unchecked(u: &BlockOperator, delta: f64, radius: f64) -> Result<(CoarseMap, Vec<f64>)> {
    let target = u.target().base().clone();
    let corners = BallCorners::new(u);
    let picks: Vec<(usize, f64)> = (0..target.len())
        .into_par_iter()
        .map(|y| {
            let ball: PointSet = (0..target.len()).filter(|&p| target.dist(y, p) <= radius).collect();
            corners.best(&ball)
        })
        .collect();
    let failing: Vec<usize> = picks
        .iter()
        .enumerate()
        .filter(|(_, &(_, v))| !(v > delta))
        .map(|(y, _)| y)
        .collect();
    if !failing.is_empty() {
        return Err(Error::Inadmissible {
            delta,
            radius,
            failing,
        });
    }
    let map = CoarseMap::new(
        target.clone(),
        u.source().base().clone(),
        picks.iter().map(|p| p.0).collect(),
    )?;
    Ok((map, picks.into_iter().map(|p| p.1).collect()))
}

fn table_only<S: Serializer>(map: &CoarseMap, s: S) -> std::result::Result<S::Ok, S::Error> {
    map.table().serialize(s)
}

#[derive(Debug, Clone, Serialize)]
pub struct ExtractionReport {
    pub delta: f64,
    /// Common radius used for both maps.
    pub radius: f64,
    pub radius_g: f64,
    pub radius_f: f64,
    /// `g: Y → X`, from `U`.
    #[serde(serialize_with = "table_only")]
    pub g: CoarseMap,
    /// `f: X → Y`, from `U*`.
    #[serde(serialize_with = "table_only")]
    pub f: CoarseMap,
    pub modulus_f: Vec<f64>,
    pub modulus_g: Vec<f64>,
    pub closeness_fg: f64,
    pub closeness_gf: f64,
    pub verdict: bool,
    pub witness_norms_g: Vec<f64>,
    pub witness_norms_f: Vec<f64>,
}

pub fn extract_pair(u: &BlockOperator, delta: f64) -> Result<ExtractionReport> {
    check_delta(delta)?;
    u.check_unitary(UNITARITY_TOL)?;
    let adj = u.adjoint();
    let radius_g = minimal_radius_unchecked(u, delta)?;
    let radius_f = minimal_radius_unchecked(&adj, delta)?;
    let radius = radius_g.max(radius_f);
    let (g, witness_norms_g) = extract_map_unchecked(u, delta, radius)?;
    let (f, witness_norms_f) = extract_map_unchecked(&adj, delta, radius)?;
    let eq = certify_equivalence(&f, &g)?;
    Ok(ExtractionReport {
        delta,
        radius,
        radius_g,
        radius_f,
        modulus_f: modulus_profile(&f),
        modulus_g: modulus_profile(&g),
        closeness_fg: eq.closeness_fg,
        closeness_gf: eq.closeness_gf,
        verdict: eq.verdict,
        g,
        f,
        witness_norms_g,
        witness_norms_f,
    })
}

/// Measured control radius: over balls `A ⊆ X` of diameter at most `r` (for
/// each center, the largest such ball), the diameter of the footprint
/// `{y : ‖χ_y U χ_A‖ ≥ delta}`. Empty footprints count as 0.
pub fn footprint_control(u: &BlockOperator, delta: f64, r: f64) -> Result<f64> {
    if !(delta > 0.0) || !(r >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "footprint_control needs delta > 0 and r >= 0 (got {delta}, {r})"
        )));
    }
    let (src, tgt) = (u.source().base(), u.target().base());
    let radii = src.realized_distances();
    let diams: Vec<f64> = (0..src.len())
        .into_par_iter()
        .map(|x| {
            let mut set = PointSet::from([x]);
            for &rho in &radii {
                let ball: PointSet = (0..src.len()).filter(|&p| src.dist(x, p) <= rho).collect();
                if src.set_diameter(&ball) <= r {
                    set = ball;
                } else {
                    break;
                }
            }
            let footprint: PointSet = (0..tgt.len())
                .filter(|&y| u.corner_norm(&PointSet::from([y]), &set) >= delta)
                .collect();
            tgt.set_diameter(&footprint)
        })
        .collect();
    Ok(diams.into_iter().fold(0.0, f64::max))
}
