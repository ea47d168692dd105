//! Dense complex linear algebra helpers: spectral norms with certificates,
//! Gram–Schmidt, and basis completion.

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Matrices whose smaller side is at most this size get a full SVD.
pub const FULL_DECOMPOSITION_LIMIT: usize = 64;
pub const DEFAULT_NORM_TOL: f64 = 1e-9;

const POWER_SEED: u64 = 0x726f_656c_6162;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMethod {
    Svd,
    PowerIteration,
}

/// Largest singular value together with an (approximately) attaining unit
/// vector `v` and the residual `‖T*T v − σ² v‖`.
#[derive(Debug, Clone)]
pub struct NormCertificate {
    pub value: f64,
    pub vector: CVec,
    pub residual: f64,
    pub method: NormMethod,
    pub iterations: usize,
}

/// Norm with certificate. Uses a full SVD when `max(rows, cols)` is small,
/// power iteration on `T*T` otherwise, and the SVD again if the iteration
/// does not certify within its budget.
pub fn norm_certificate(m: &CMat, tol: f64) -> Result<NormCertificate> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("norm tolerance {tol} must be > 0")));
    }
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(NormCertificate {
            value: 0.0,
            vector: CVec::zeros(m.ncols()),
            residual: 0.0,
            method: NormMethod::Svd,
            iterations: 0,
        });
    }
    if m.nrows().max(m.ncols()) <= FULL_DECOMPOSITION_LIMIT {
        Ok(svd_certificate(m))
    } else {
        // A near-degenerate top of the spectrum can stall the iteration.
        match power_certificate(m, tol, 10 * m.ncols().max(m.nrows())) {
            Err(Error::NoConvergence { .. }) => Ok(svd_certificate(m)),
            other => other,
        }
    }
}

fn svd_certificate(m: &CMat) -> NormCertificate {
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested v_t");
    let (k, &value) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, &f64::NEG_INFINITY), |best, cur| if *cur.1 > *best.1 { cur } else { best });
    let vector: CVec = v_t.row(k).adjoint();
    let residual = gram_residual(m, &vector, value * value);
    NormCertificate {
        value,
        vector,
        residual,
        method: NormMethod::Svd,
        iterations: 0,
    }
}

fn gram_residual(m: &CMat, v: &CVec, lambda: f64) -> f64 {
    let w = m.ad_mul(&(m * v));
    (w - v * C64::from(lambda)).norm()
}

/// Power iteration on `T*T` with a fixed-seed start vector.
pub fn power_certificate(m: &CMat, tol: f64, budget: usize) -> Result<NormCertificate> {
    let n = m.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_SEED);
    let mut v = CVec::from_fn(n, |_, _| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
    v /= C64::from(v.norm());
    let mut best = (0.0f64, f64::INFINITY);
    for it in 1..=budget {
        let w = m.ad_mul(&(m * &v));
        let lambda = v.dotc(&w).re;
        let residual = (&w - &v * C64::from(lambda)).norm();
        let wn = w.norm();
        best = (lambda.max(0.0).sqrt(), residual);
        if wn == 0.0 {
            // v is in the kernel; T vanishes on the seed direction, which for
            // a random start means T = 0 up to measure zero.
            if m.iter().all(|z| *z == C64::from(0.0)) {
                return Ok(NormCertificate {
                    value: 0.0,
                    vector: v,
                    residual: 0.0,
                    method: NormMethod::PowerIteration,
                    iterations: it,
                });
            }
            break;
        }
        if residual <= tol * lambda {
            return Ok(NormCertificate {
                value: lambda.sqrt(),
                vector: v,
                residual,
                method: NormMethod::PowerIteration,
                iterations: it,
            });
        }
        v = w / C64::from(wn);
    }
    Err(Error::NoConvergence {
        estimate: best.0,
        residual: best.1,
        iterations: budget,
    })
}

/// Spectral norm, falling back to a full SVD when power iteration does not
/// certify within its budget.
pub fn spectral_norm(m: &CMat) -> f64 {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return 0.0;
    }
    if r == 1 || c == 1 {
        return m.norm();
    }
    if r.max(c) <= FULL_DECOMPOSITION_LIMIT {
        return largest_singular_value(m);
    }
    match power_certificate(m, DEFAULT_NORM_TOL, 10 * r.max(c)) {
        Ok(cert) => cert.value,
        Err(_) => largest_singular_value(m),
    }
}

pub fn largest_singular_value(m: &CMat) -> f64 {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// Orthonormalizes `vectors` (twice-iterated modified Gram–Schmidt), dropping
/// directions whose residual norm falls below `tol`.
pub fn orthonormalize(vectors: &[CVec], tol: f64) -> Vec<CVec> {
    let mut basis: Vec<CVec> = Vec::new();
    for v in vectors {
        if let Some(u) = orthogonal_residual(v, &basis, tol) {
            basis.push(u);
        }
    }
    basis
}

fn orthogonal_residual(v: &CVec, basis: &[CVec], tol: f64) -> Option<CVec> {
    let scale = v.norm();
    if scale == 0.0 {
        return None;
    }
    let mut w = v.clone();
    for _ in 0..2 {
        for b in basis {
            let c = b.dotc(&w);
            w -= b * c;
        }
    }
    let n = w.norm();
    if n <= tol * scale.max(1.0) {
        None
    } else {
        Some(w / C64::from(n))
    }
}

/// Extends an orthonormal family to `count` vectors in `C^dim` using seeded
/// random candidates, so the result is deterministic given `rng`.
pub fn extend_orthonormal(existing: &[CVec], dim: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<CVec> {
    let mut all: Vec<CVec> = existing.to_vec();
    let mut added = Vec::new();
    let mut attempts = 0;
    while added.len() < count {
        attempts += 1;
        assert!(attempts < 100 * (dim + 1), "cannot extend basis: dimension exhausted");
        let cand = CVec::from_fn(dim, |_, _| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        if let Some(u) = orthogonal_residual(&cand, &all, 1e-8) {
            all.push(u.clone());
            added.push(u);
        }
    }
    added
}

pub fn columns_to_matrix(dim: usize, cols: &[CVec]) -> CMat {
    let mut m = CMat::zeros(dim, cols.len());
    for (j, c) in cols.iter().enumerate() {
        m.set_column(j, c);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> CMat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CMat::from_fn(rows, cols, |_, _| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
    }

    #[test]
    fn identity_and_rank_one() {
        let id = CMat::identity(5, 5);
        let cert = norm_certificate(&id, 1e-9).unwrap();
        assert!((cert.value - 1.0).abs() < 1e-12);
        let v = CVec::from_vec(vec![C64::new(1.0, 2.0), C64::new(0.0, -1.0), C64::new(3.0, 0.0)]);
        let w = CVec::from_vec(vec![C64::new(0.5, 0.0), C64::new(0.0, 0.5)]);
        let rank_one = &w * v.adjoint();
        let cert = norm_certificate(&rank_one, 1e-9).unwrap();
        assert!((cert.value - v.norm() * w.norm()).abs() < 1e-12);
        assert!(cert.residual <= 1e-9 * cert.value * cert.value);
    }

    #[test]
    fn power_iteration_matches_svd() {
        for seed in 0..5 {
            let m = random_matrix(80, 70, seed);
            let cert = norm_certificate(&m, 1e-9).unwrap();
            assert_eq!(cert.method, NormMethod::PowerIteration);
            let exact = largest_singular_value(&m);
            assert!((cert.value - exact).abs() <= 1e-9 * exact, "{} vs {}", cert.value, exact);
        }
    }

    #[test]
    fn zero_matrix() {
        assert_eq!(spectral_norm(&CMat::zeros(3, 4)), 0.0);
        assert_eq!(norm_certificate(&CMat::zeros(70, 70), 1e-9).unwrap().value, 0.0);
        assert!(norm_certificate(&CMat::zeros(2, 2), 0.0).is_err());
    }

    #[test]
    fn budget_exhaustion_reports_estimate() {
        // Two nearly equal top singular values stall power iteration.
        let mut m = CMat::zeros(70, 70);
        m[(0, 0)] = C64::from(1.0);
        m[(1, 1)] = C64::from(1.0 - 1e-7);
        match power_certificate(&m, 1e-14, 3) {
            Err(Error::NoConvergence { estimate, .. }) => assert!(estimate > 0.9),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn gram_schmidt_and_extension() {
        let a = CVec::from_vec(vec![C64::from(1.0), C64::from(1.0), C64::from(0.0)]);
        let b = CVec::from_vec(vec![C64::from(2.0), C64::from(2.0), C64::from(0.0)]);
        let basis = orthonormalize(&[a, b], 1e-10);
        assert_eq!(basis.len(), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let more = extend_orthonormal(&basis, 3, 2, &mut rng);
        let q = columns_to_matrix(3, &[basis, more].concat());
        assert!((q.adjoint() * &q - CMat::identity(3, 3)).norm() < 1e-12);
    }
}
