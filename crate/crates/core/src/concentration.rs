//! Concentration witnesses.
//!
//! Given a unitary `U: ℓ²(X) → ℓ²(Y)`, a point `y` and a radius `R`, let
//! `δ = max_x ‖χ_B U χ_x‖` with `B = B̄(y; R)`. Then some `A ⊆ X` makes the
//! far corner `‖χ_{Y∖B} U χ_A U* χ_y‖` at least `½(1 − δ²)^{1/2}`. The set is
//! found by pushing the unit vector `v = U*(δ_y ⊗ h)` through `U` one point at
//! a time and splitting `X` by greedy signs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{spectral_norm, CMat, CVec, C64};
use crate::metric_space::PointSet;
use crate::operators::BlockOperator;
use crate::signs::greedy_signs;

pub const UNITARITY_TOL: f64 = 1e-9;
const CHECK_SLACK: f64 = 1e-9;
const SLACK_FLOOR: f64 = 64.0 * f64::EPSILON;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationWitness {
    pub y: usize,
    pub radius: f64,
    pub h_index: usize,
    /// `max_x ‖χ_{B̄(y;R)} U χ_x‖`.
    pub delta_actual: f64,
    pub a: Vec<usize>,
    /// `‖χ_{Y∖B} U χ_A U* χ_y‖`.
    pub certificate: f64,
    /// `½ (1 − delta_actual²)^{1/2}`.
    pub bound: f64,
    /// `‖Σ_x ε_x (1 − χ_B) U χ_x v‖²` after greedy signs.
    pub signed_mass: f64,
    /// `d(y, Y ∖ B)`; infinite when `B = Y`.
    pub separation: f64,
    /// `B` covers all of `Y`, so no far corner exists.
    pub degenerate: bool,
}

fn ball_rows(u: &BlockOperator, y: usize, radius: f64) -> Result<PointSet> {
    u.target().base().ball(y, radius)
}

/// `‖χ_{B̄(y;R)} U χ_x‖` for every `x`.
pub fn corner_profile(u: &BlockOperator, y: usize, radius: f64) -> Result<Vec<f64>> {
    u.check_unitary(UNITARITY_TOL)?;
    let ball = ball_rows(u, y, radius)?;
    Ok(profile_unchecked(u, &ball))
}

fn profile_unchecked(u: &BlockOperator, ball: &PointSet) -> Vec<f64> {
    (0..u.source().len())
        .map(|x| u.corner_norm(ball, &PointSet::from([x])))
        .collect()
}

/// Builds the witness for the fiber basis vector `h_index` at `y`.
pub fn concentration_witness(
    u: &BlockOperator,
    y: usize,
    radius: f64,
    h_index: usize,
) -> Result<ConcentrationWitness> {
    u.check_unitary(UNITARITY_TOL)?;
    let (src, tgt) = (u.source(), u.target());
    let ball = ball_rows(u, y, radius)?;
    if h_index >= tgt.fiber_dim(y) {
        return Err(Error::InvalidArgument(format!(
            "h_index {h_index} out of range for fiber dimension {} at {y}",
            tgt.fiber_dim(y)
        )));
    }
    let delta = profile_unchecked(u, &ball).into_iter().fold(0.0, f64::max);
    // 1 − δ² at rounding level is noise that the square root would amplify.
    let slack = match 1.0 - delta * delta {
        s if s <= SLACK_FLOOR => 0.0,
        s => s,
    };
    let bound = 0.5 * slack.sqrt();

    let dense = u.to_dense();
    let row = tgt.range(y).start + h_index;
    let v: CVec = dense.row(row).adjoint();

    let far: Vec<usize> = (0..tgt.len()).filter(|p| !ball.contains(p)).collect();
    let far_rows: Vec<usize> = far.iter().flat_map(|&p| tgt.range(p)).collect();

    // v_x = (1 − χ_B) U χ_x v, kept only on the coordinates of Y ∖ B.
    let mut pieces = Vec::with_capacity(src.len());
    let mut mass = 0.0;
    for x in 0..src.len() {
        let rx = src.range(x);
        let vx = v.rows(rx.start, rx.len());
        let local_mass = vx.norm_squared();
        mass += local_mass;
        let image = dense.columns(rx.start, rx.len()) * vx;
        let piece = CVec::from_iterator(far_rows.len(), far_rows.iter().map(|&r| image[r]));
        let lhs = piece.norm_squared();
        if lhs < slack * local_mass - CHECK_SLACK {
            return Err(Error::Invariant(format!(
                "per-point mass bound fails at x={x}: {lhs} < {}",
                slack * local_mass
            )));
        }
        pieces.push(piece);
    }
    if (mass - 1.0).abs() > CHECK_SLACK {
        return Err(Error::Invariant(format!("‖v‖² = {mass} is not 1")));
    }
    let selection = greedy_signs(&pieces)?;
    if selection.achieved < slack - CHECK_SLACK {
        return Err(Error::Invariant(format!(
            "signed mass {} below 1 − δ² = {slack}",
            selection.achieved
        )));
    }

    let positive: Vec<usize> = (0..src.len()).filter(|&x| selection.signs[x] > 0).collect();
    let negative: Vec<usize> = (0..src.len()).filter(|&x| selection.signs[x] < 0).collect();
    let cert_p = far_corner(&dense, u, &positive, &far_rows, y);
    let cert_n = far_corner(&dense, u, &negative, &far_rows, y);
    let (a, certificate) = if cert_p >= cert_n {
        (positive, cert_p)
    } else {
        (negative, cert_n)
    };
    if certificate < bound - CHECK_SLACK {
        return Err(Error::Invariant(format!(
            "certificate {certificate} below bound {bound}"
        )));
    }
    let far_set: PointSet = far.iter().copied().collect();
    Ok(ConcentrationWitness {
        y,
        radius,
        h_index,
        delta_actual: delta,
        a,
        certificate,
        bound,
        signed_mass: selection.achieved,
        separation: tgt.base().dist_to_set(y, &far_set),
        degenerate: far.is_empty(),
    })
}

/// `‖χ_{rows} U χ_A U* χ_y‖` computed from the dense matrix.
fn far_corner(dense: &CMat, u: &BlockOperator, a: &[usize], rows: &[usize], y: usize) -> f64 {
    let (src, tgt) = (u.source(), u.target());
    let cols: Vec<usize> = a.iter().flat_map(|&x| src.range(x)).collect();
    let ry = tgt.range(y);
    // U χ_A U* restricted to rows × fiber(y): Σ_{k ∈ A} U[rows, k] conj(U[ry, k]).
    let m = CMat::from_fn(rows.len(), ry.len(), |i, j| {
        cols.iter()
            .map(|&k| dense[(rows[i], k)] * dense[(ry.start + j, k)].conj())
            .sum::<C64>()
    });
    spectral_norm(&m)
}

/// Tries every basis vector of the fiber at `y` and keeps the largest
/// certificate (ties to the smallest index).
pub fn concentration_witness_sweep(u: &BlockOperator, y: usize, radius: f64) -> Result<ConcentrationWitness> {
    u.target().base().check_point(y)?;
    let mut best: Option<ConcentrationWitness> = None;
    for h in 0..u.target().fiber_dim(y) {
        let w = concentration_witness(u, y, radius, h)?;
        if best.as_ref().is_none_or(|b| w.certificate > b.certificate) {
            best = Some(w);
        }
    }
    Ok(best.expect("fiber dimension is at least 1"))
}

#[cfg(test)]
#[allow(clippy::approx_constant)]
mod tests {
    use super::*;
    use crate::locality::{quasi_locality_violation, LocalityConfig, Mode};
    use crate::metric_space::FiniteMetricSpace;
    use crate::operators::{random_band_unitary, FiberedSpace};
    use std::collections::BTreeMap;
    use std::sync::Arc;

    fn hadamard() -> BlockOperator {
        let base = Arc::new(FiniteMetricSpace::from_matrix(vec![vec![0.0, 3.0], vec![3.0, 0.0]]).unwrap());
        let s = FiberedSpace::uniform(base, 1).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let m = CMat::from_row_slice(2, 2, &[C64::from(r), C64::from(r), C64::from(r), C64::from(-r)]);
        BlockOperator::from_dense(s.clone(), s, &m).unwrap()
    }

    #[test]
    fn identity_profile() {
        let s = FiberedSpace::uniform(Arc::new(FiniteMetricSpace::path(5).unwrap()), 2).unwrap();
        let id = BlockOperator::identity(&s);
        let prof = corner_profile(&id, 2, 0.0).unwrap();
        assert_eq!(prof, vec![0.0, 0.0, 1.0, 0.0, 0.0]);
        let prof = corner_profile(&id, 2, 1.0).unwrap();
        assert_eq!(prof, vec![0.0, 1.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn permutation_profile_and_degenerate_bound() {
        let base = Arc::new(FiniteMetricSpace::path(4).unwrap());
        let s = FiberedSpace::uniform(base, 1).unwrap();
        // reflection i -> 3 - i
        let blocks: BTreeMap<_, _> = (0..4).map(|i| ((3 - i, i), CMat::identity(1, 1))).collect();
        let u = BlockOperator::from_blocks(s.clone(), s, blocks).unwrap();
        let prof = corner_profile(&u, 1, 0.0).unwrap();
        assert_eq!(prof, vec![0.0, 0.0, 1.0, 0.0]);
        let w = concentration_witness(&u, 1, 0.0, 0).unwrap();
        assert_eq!(w.delta_actual, 1.0);
        assert_eq!(w.bound, 0.0);
        assert!(w.certificate >= w.bound);
    }

    #[test]
    fn hadamard_fixture() {
        let u = hadamard();
        let prof = corner_profile(&u, 0, 2.0).unwrap();
        assert!((prof[0] - 0.70711).abs() < 5e-6 && (prof[1] - 0.70711).abs() < 5e-6);
        let w = concentration_witness(&u, 0, 2.0, 0).unwrap();
        assert!((w.delta_actual - 0.70711).abs() < 5e-6);
        assert_eq!(w.a, vec![0]);
        assert!((w.certificate - 0.5).abs() < 1e-12);
        assert!((w.bound - 0.35355).abs() < 5e-6);
        assert_eq!(w.separation, 3.0);
        assert!(!w.degenerate);
    }

    #[test]
    fn rejects_non_unitary_and_bad_index() {
        let s = FiberedSpace::uniform(Arc::new(FiniteMetricSpace::path(3).unwrap()), 1).unwrap();
        let t = BlockOperator::identity(&s).scale(C64::from(2.0));
        assert!(matches!(corner_profile(&t, 0, 0.0), Err(Error::NotUnitary(_))));
        let id = BlockOperator::identity(&s);
        assert!(concentration_witness(&id, 0, 0.0, 1).is_err());
        assert!(concentration_witness(&id, 3, 0.0, 0).is_err());
    }

    #[test]
    fn degenerate_when_ball_is_everything() {
        let s = FiberedSpace::uniform(Arc::new(FiniteMetricSpace::path(4).unwrap()), 2).unwrap();
        let u = random_band_unitary(&s, 1.0, 2, 9).unwrap();
        let w = concentration_witness(&u, 1, 3.0, 0).unwrap();
        assert!(w.degenerate);
        assert_eq!(w.certificate, 0.0);
        assert_eq!(w.separation, f64::INFINITY);
    }

    #[test]
    fn witness_certifies_non_quasi_locality() {
        let s = FiberedSpace::uniform(Arc::new(FiniteMetricSpace::path(10).unwrap()), 2).unwrap();
        for seed in 0..5 {
            let u = random_band_unitary(&s, 2.0, 2, seed).unwrap();
            let w = concentration_witness_sweep(&u, 4, 1.0).unwrap();
            assert!(w.certificate >= w.bound - 1e-9);
            // U χ_A U* violates quasi-locality at every R' below the separation.
            let a: PointSet = w.a.iter().copied().collect();
            let conj = u
                .compose(&crate::operators::indicator(u.source(), &a).unwrap())
                .unwrap()
                .compose(&u.adjoint())
                .unwrap();
            let rep = quasi_locality_violation(&conj, w.separation - 0.5, Mode::Exact, &LocalityConfig::default()).unwrap();
            assert!(rep.violation_lower >= w.certificate - 1e-9);
        }
    }
}
