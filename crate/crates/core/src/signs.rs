//! Sign selection for families of vectors in a Hilbert space.
//!
//! For any finite family `v_1, …, v_n` the average of `‖Σ ε_k v_k‖²` over all
//! sign patterns equals `Σ ‖v_k‖²`, so some pattern reaches at least that
//! value. [`greedy_signs`] finds such a pattern deterministically by the
//! method of conditional expectations; [`brute_force_signs`] and
//! [`rademacher_average`] are exhaustive references.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CVec, C64};

/// Largest family accepted by the exhaustive routines.
pub const MAX_EXHAUSTIVE: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignSelection {
    /// Entries are `+1` or `-1`.
    pub signs: Vec<i8>,
    /// `‖Σ ε_k v_k‖²`.
    pub achieved: f64,
    /// `Σ ‖v_k‖²`.
    pub target: f64,
}

fn check_dims(vectors: &[CVec]) -> Result<usize> {
    let dim = vectors.first().map_or(0, |v| v.len());
    if let Some(k) = vectors.iter().position(|v| v.len() != dim) {
        return Err(Error::InvalidArgument(format!(
            "vector {k} has dimension {} but vector 0 has {dim}",
            vectors[k].len()
        )));
    }
    Ok(dim)
}

fn target_of(vectors: &[CVec]) -> f64 {
    vectors.iter().map(|v| v.norm_squared()).sum()
}

fn signed_sum(vectors: &[CVec], dim: usize, pattern: u64) -> CVec {
    let mut s = CVec::zeros(dim);
    for (k, v) in vectors.iter().enumerate() {
        if pattern >> k & 1 == 1 {
            s -= v;
        } else {
            s += v;
        }
    }
    s
}

fn pattern_signs(n: usize, pattern: u64) -> Vec<i8> {
    (0..n).map(|k| if pattern >> k & 1 == 1 { -1 } else { 1 }).collect()
}

/// Chooses `ε_k = +1` iff `Re⟨s_{k-1}, v_k⟩ ≥ 0`, where `s_{k-1}` is the
/// running signed sum. Each step can only increase `‖s‖² − Σ_{j≤k} ‖v_j‖²`.
pub fn greedy_signs(vectors: &[CVec]) -> Result<SignSelection> {
    let dim = check_dims(vectors)?;
    let mut s = CVec::zeros(dim);
    let mut signs = Vec::with_capacity(vectors.len());
    for v in vectors {
        let sign = if s.dotc(v).re >= 0.0 { 1 } else { -1 };
        if sign == 1 {
            s += v;
        } else {
            s -= v;
        }
        signs.push(sign);
    }
    Ok(SignSelection {
        signs,
        achieved: s.norm_squared(),
        target: target_of(vectors),
    })
}

/// Global maximum over all `2^n` patterns; ties go to the lexicographically
/// smallest pattern with `+1` ordered before `-1`.
pub fn brute_force_signs(vectors: &[CVec]) -> Result<SignSelection> {
    let dim = check_dims(vectors)?;
    let n = vectors.len();
    if n > MAX_EXHAUSTIVE {
        return Err(Error::TooLarge(format!(
            "brute force over {n} vectors exceeds the limit of {MAX_EXHAUSTIVE}"
        )));
    }
    if n == 0 {
        return Ok(SignSelection {
            signs: Vec::new(),
            achieved: 0.0,
            target: 0.0,
        });
    }
    // A pattern and its negation give bitwise-identical norms, and the one
    // with ε_1 = +1 is lexicographically smaller, so half the cube suffices.
    // Lexicographic order with ε_1 first corresponds to reversing the bits.
    let half = 1u64 << (n - 1);
    let lex_key = |p: u64| p.reverse_bits() >> (64 - n);
    let (achieved, pattern) = (0..half)
        .into_par_iter()
        .map(|p| {
            let pattern = p << 1;
            (signed_sum(vectors, dim, pattern).norm_squared(), pattern)
        })
        .reduce(
            || (f64::NEG_INFINITY, u64::MAX),
            |a, b| {
                if a.0 > b.0 || (a.0 == b.0 && lex_key(a.1) <= lex_key(b.1)) {
                    a
                } else {
                    b
                }
            },
        );
    Ok(SignSelection {
        signs: pattern_signs(n, pattern),
        achieved,
        target: target_of(vectors),
    })
}

/// Exact mean of `‖Σ ε_k v_k‖²` over all `2^n` sign patterns.
pub fn rademacher_average(vectors: &[CVec]) -> Result<f64> {
    let dim = check_dims(vectors)?;
    let n = vectors.len();
    if n > MAX_EXHAUSTIVE {
        return Err(Error::TooLarge(format!(
            "exact average over {n} vectors exceeds the limit of {MAX_EXHAUSTIVE}"
        )));
    }
    let count = 1u64 << n;
    // Fixed-order chunk sums keep the result independent of the thread count.
    let chunk = 1u64 << n.min(10);
    let partials: Vec<f64> = (0..count / chunk)
        .into_par_iter()
        .map(|c| {
            (c * chunk..(c + 1) * chunk)
                .map(|p| signed_sum(vectors, dim, p).norm_squared())
                .sum::<f64>()
        })
        .collect();
    Ok(partials.iter().sum::<f64>() / count as f64)
}

/// Convenience: the signed combination `Σ ε_k v_k`.
pub fn apply_signs(vectors: &[CVec], signs: &[i8]) -> Result<CVec> {
    let dim = check_dims(vectors)?;
    if signs.len() != vectors.len() {
        return Err(Error::InvalidArgument("sign count differs from vector count".into()));
    }
    let mut s = CVec::zeros(dim);
    for (v, &e) in vectors.iter().zip(signs) {
        s += v * C64::from(f64::from(e));
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn vec_of(entries: &[(f64, f64)]) -> CVec {
        CVec::from_iterator(entries.len(), entries.iter().map(|&(a, b)| C64::new(a, b)))
    }

    fn random_family(n: usize, dim: usize, seed: u64) -> Vec<CVec> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| CVec::from_fn(dim, |_, _| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)))
            .collect()
    }

    #[test]
    fn single_vector() {
        let v = vec_of(&[(1.0, 2.0), (0.0, -1.0)]);
        let sel = greedy_signs(std::slice::from_ref(&v)).unwrap();
        assert_eq!(sel.signs, vec![1]);
        assert_eq!(sel.achieved, sel.target);
        assert_eq!(rademacher_average(std::slice::from_ref(&v)).unwrap(), v.norm_squared());
    }

    #[test]
    fn opposite_pair() {
        let e = vec_of(&[(1.0, 0.0), (0.0, 0.0)]);
        let sel = greedy_signs(&[e.clone(), -e.clone()]).unwrap();
        assert_eq!(sel.signs, vec![1, -1]);
        assert_eq!((sel.achieved, sel.target), (4.0, 2.0));
    }

    #[test]
    fn equal_pair_brute_force() {
        let e = vec_of(&[(0.0, 1.0)]);
        let sel = brute_force_signs(&[e.clone(), e.clone()]).unwrap();
        assert_eq!(sel.signs, vec![1, 1]);
        assert_eq!(sel.achieved, 4.0);
        assert_eq!(rademacher_average(&[e.clone(), e]).unwrap(), 2.0);
    }

    #[test]
    fn orthogonal_vectors_hit_target() {
        let a = vec_of(&[(1.0, 0.0), (0.0, 0.0), (0.0, 0.0)]);
        let b = vec_of(&[(0.0, 0.0), (0.0, 2.0), (0.0, 0.0)]);
        let c = vec_of(&[(0.0, 0.0), (0.0, 0.0), (3.0, 0.0)]);
        let sel = brute_force_signs(&[a, b, c]).unwrap();
        assert_eq!(sel.achieved, sel.target);
        assert_eq!(sel.signs, vec![1, 1, 1]);
    }

    #[test]
    fn empty_family_and_errors() {
        let sel = greedy_signs(&[]).unwrap();
        assert!(sel.signs.is_empty());
        assert_eq!(sel.achieved, 0.0);
        assert_eq!(rademacher_average(&[]).unwrap(), 0.0);
        let bad = [vec_of(&[(1.0, 0.0)]), vec_of(&[(1.0, 0.0), (0.0, 0.0)])];
        assert!(greedy_signs(&bad).is_err());
        assert!(matches!(
            brute_force_signs(&random_family(21, 2, 0)),
            Err(Error::TooLarge(_))
        ));
    }

    #[test]
    fn twelve_random_vectors() {
        let family = random_family(12, 6, 42);
        let greedy = greedy_signs(&family).unwrap();
        let brute = brute_force_signs(&family).unwrap();
        assert!(greedy.achieved >= greedy.target - 1e-9);
        assert!(brute.achieved >= greedy.achieved - 1e-12);
        let check = apply_signs(&family, &brute.signs).unwrap().norm_squared();
        assert!((check - brute.achieved).abs() < 1e-12);
        let avg = rademacher_average(&random_family(10, 4, 1)).unwrap();
        let tgt: f64 = random_family(10, 4, 1).iter().map(|v| v.norm_squared()).sum();
        assert!((avg - tgt).abs() < 1e-9);
    }

    #[test]
    fn near_cancelling_family() {
        // v, -v(1+η), v, -v(1+η), ... keeps the running sum tiny.
        let base = vec_of(&[(0.6, 0.8), (0.0, 0.0)]);
        let family: Vec<CVec> = (0..16)
            .map(|k| if k % 2 == 0 { base.clone() } else { -&base * C64::from(1.0 + 1e-9) })
            .collect();
        let sel = greedy_signs(&family).unwrap();
        assert!(sel.achieved >= sel.target - 1e-9);
    }

    #[test]
    fn sign_flip_symmetry() {
        let family = random_family(9, 3, 5);
        let negated: Vec<CVec> = family.iter().map(|v| -v).collect();
        let a = greedy_signs(&family).unwrap();
        let b = greedy_signs(&negated).unwrap();
        assert!((a.achieved - b.achieved).abs() < 1e-12);
        let a = brute_force_signs(&family).unwrap();
        let b = brute_force_signs(&negated).unwrap();
        assert_eq!(a.achieved, b.achieved);
    }
}
