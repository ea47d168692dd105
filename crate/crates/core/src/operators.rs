//! Block operators between fibered finite spaces.
//!
//! A [`FiberedSpace`] attaches a fiber `C^{d_x}` to every point of a finite
//! metric space. A [`BlockOperator`] stores one dense `d_y × d_x` block per
//! `(y, x)` pair that may be nonzero; absent blocks are zero.
//!
//! Local compactness is automatic in finite dimensions, so there is no
//! predicate for it.

use std::collections::BTreeMap;
use std::ops::Range;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{norm_certificate, spectral_norm, CMat, NormCertificate, C64};
use crate::metric_space::{FiniteMetricSpace, PointSet};

pub const DEFAULT_PROPAGATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct FiberedSpace {
    base: Arc<FiniteMetricSpace>,
    fiber_dims: Vec<usize>,
    offsets: Vec<usize>,
}

impl PartialEq for FiberedSpace {
    fn eq(&self, other: &Self) -> bool {
        self.fiber_dims == other.fiber_dims
            && (Arc::ptr_eq(&self.base, &other.base) || self.base == other.base)
    }
}

impl FiberedSpace {
    pub fn new(base: Arc<FiniteMetricSpace>, fiber_dims: Vec<usize>) -> Result<Self> {
        if fiber_dims.len() != base.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} fiber dimensions for a space of {} points",
                fiber_dims.len(),
                base.len()
            )));
        }
        if let Some(x) = fiber_dims.iter().position(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!("fiber dimension at {x} is zero")));
        }
        let mut offsets = Vec::with_capacity(fiber_dims.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for &d in &fiber_dims {
            acc += d;
            offsets.push(acc);
        }
        Ok(Self {
            base,
            fiber_dims,
            offsets,
        })
    }

    pub fn uniform(base: Arc<FiniteMetricSpace>, dim: usize) -> Result<Self> {
        let n = base.len();
        Self::new(base, vec![dim; n])
    }

    pub fn base(&self) -> &Arc<FiniteMetricSpace> {
        &self.base
    }

    pub fn fiber_dims(&self) -> &[usize] {
        &self.fiber_dims
    }

    #[inline]
    pub fn fiber_dim(&self, x: usize) -> usize {
        self.fiber_dims[x]
    }

    pub fn total_dim(&self) -> usize {
        self.offsets[self.fiber_dims.len()]
    }

    pub fn len(&self) -> usize {
        self.fiber_dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fiber_dims.is_empty()
    }

    /// Coordinates of the fiber over `x` inside `C^{total_dim}`.
    #[inline]
    pub fn range(&self, x: usize) -> Range<usize> {
        self.offsets[x]..self.offsets[x + 1]
    }

    /// The point carrying global basis index `k`.
    pub fn point_of(&self, k: usize) -> usize {
        self.offsets.partition_point(|&o| o <= k) - 1
    }

    pub(crate) fn same_base(&self, other: &FiberedSpace) -> bool {
        Arc::ptr_eq(&self.base, &other.base) || self.base == other.base
    }
}

/// Block matrix `T: ℓ²(X; C^{d}) → ℓ²(Y; C^{d'})`, blocks keyed by `(y, x)`.
#[derive(Debug, Clone)]
pub struct BlockOperator {
    source: FiberedSpace,
    target: FiberedSpace,
    blocks: BTreeMap<(usize, usize), CMat>,
}

impl PartialEq for BlockOperator {
    /// Equality of the underlying matrices (absent blocks compare as zero).
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source
            && self.target == other.target
            && self.to_dense() == other.to_dense()
    }
}

impl BlockOperator {
    pub fn zeros(source: FiberedSpace, target: FiberedSpace) -> Self {
        Self {
            source,
            target,
            blocks: BTreeMap::new(),
        }
    }

    pub fn identity(space: &FiberedSpace) -> Self {
        let blocks = (0..space.len())
            .map(|x| {
                let d = space.fiber_dim(x);
                ((x, x), CMat::identity(d, d))
            })
            .collect();
        Self {
            source: space.clone(),
            target: space.clone(),
            blocks,
        }
    }

    /// Builds from blocks, validating shapes and finiteness.
    pub fn from_blocks(
        source: FiberedSpace,
        target: FiberedSpace,
        blocks: BTreeMap<(usize, usize), CMat>,
    ) -> Result<Self> {
        for (&(y, x), m) in &blocks {
            if y >= target.len() || x >= source.len() {
                return Err(Error::InvalidArgument(format!("block ({y},{x}) out of range")));
            }
            if m.shape() != (target.fiber_dim(y), source.fiber_dim(x)) {
                return Err(Error::ShapeMismatch(format!(
                    "block ({y},{x}) has shape {:?}, expected ({}, {})",
                    m.shape(),
                    target.fiber_dim(y),
                    source.fiber_dim(x)
                )));
            }
            if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::InvalidArgument(format!("block ({y},{x}) has non-finite entries")));
            }
        }
        Ok(Self {
            source,
            target,
            blocks,
        })
    }

    /// Splits a dense matrix into blocks; blocks that are identically zero are dropped.
    pub fn from_dense(source: FiberedSpace, target: FiberedSpace, m: &CMat) -> Result<Self> {
        if m.shape() != (target.total_dim(), source.total_dim()) {
            return Err(Error::ShapeMismatch(format!(
                "dense matrix {:?} vs spaces ({}, {})",
                m.shape(),
                target.total_dim(),
                source.total_dim()
            )));
        }
        let mut blocks = BTreeMap::new();
        for y in 0..target.len() {
            let ry = target.range(y);
            for x in 0..source.len() {
                let rx = source.range(x);
                let view = m.view((ry.start, rx.start), (ry.len(), rx.len()));
                if view.iter().any(|z| z.re != 0.0 || z.im != 0.0) {
                    blocks.insert((y, x), view.into_owned());
                }
            }
        }
        Self::from_blocks(source, target, blocks)
    }

    pub fn to_dense(&self) -> CMat {
        let mut m = CMat::zeros(self.target.total_dim(), self.source.total_dim());
        for (&(y, x), b) in &self.blocks {
            let (ry, rx) = (self.target.range(y), self.source.range(x));
            m.view_mut((ry.start, rx.start), (ry.len(), rx.len())).copy_from(b);
        }
        m
    }

    pub fn source(&self) -> &FiberedSpace {
        &self.source
    }

    pub fn target(&self) -> &FiberedSpace {
        &self.target
    }

    pub fn blocks(&self) -> &BTreeMap<(usize, usize), CMat> {
        &self.blocks
    }

    pub fn block(&self, y: usize, x: usize) -> Option<&CMat> {
        self.blocks.get(&(y, x))
    }

    /// Block `(y, x)` with zeros materialized.
    pub fn block_or_zero(&self, y: usize, x: usize) -> CMat {
        self.blocks
            .get(&(y, x))
            .cloned()
            .unwrap_or_else(|| CMat::zeros(self.target.fiber_dim(y), self.source.fiber_dim(x)))
    }

    pub fn adjoint(&self) -> BlockOperator {
        let blocks = self
            .blocks
            .iter()
            .map(|(&(y, x), b)| ((x, y), b.adjoint()))
            .collect();
        BlockOperator {
            source: self.target.clone(),
            target: self.source.clone(),
            blocks,
        }
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &BlockOperator) -> Result<BlockOperator> {
        if self.source != inner.target {
            return Err(Error::ShapeMismatch(
                "compose: outer source differs from inner target".into(),
            ));
        }
        let mut by_col: BTreeMap<usize, Vec<(usize, &CMat)>> = BTreeMap::new();
        for (&(z, y), b) in &self.blocks {
            by_col.entry(y).or_default().push((z, b));
        }
        let mut out: BTreeMap<(usize, usize), CMat> = BTreeMap::new();
        for (&(y, x), b) in &inner.blocks {
            if let Some(list) = by_col.get(&y) {
                for &(z, a) in list {
                    let prod = a * b;
                    out.entry((z, x))
                        .and_modify(|acc| *acc += &prod)
                        .or_insert(prod);
                }
            }
        }
        Ok(BlockOperator {
            source: inner.source.clone(),
            target: self.target.clone(),
            blocks: out,
        })
    }

    fn check_same_shape(&self, other: &BlockOperator) -> Result<()> {
        if self.source != other.source || self.target != other.target {
            return Err(Error::ShapeMismatch("operators act between different spaces".into()));
        }
        Ok(())
    }

    pub fn add(&self, other: &BlockOperator) -> Result<BlockOperator> {
        self.check_same_shape(other)?;
        let mut blocks = self.blocks.clone();
        for (&k, b) in &other.blocks {
            blocks
                .entry(k)
                .and_modify(|acc| *acc += b)
                .or_insert_with(|| b.clone());
        }
        Ok(BlockOperator {
            source: self.source.clone(),
            target: self.target.clone(),
            blocks,
        })
    }

    pub fn sub(&self, other: &BlockOperator) -> Result<BlockOperator> {
        self.add(&other.scale(C64::from(-1.0)))
    }

    pub fn scale(&self, c: C64) -> BlockOperator {
        BlockOperator {
            source: self.source.clone(),
            target: self.target.clone(),
            blocks: self.blocks.iter().map(|(&k, b)| (k, b * c)).collect(),
        }
    }

    /// Keeps only the blocks for which `keep(y, x)` holds.
    pub fn filter_blocks(&self, mut keep: impl FnMut(usize, usize) -> bool) -> BlockOperator {
        BlockOperator {
            source: self.source.clone(),
            target: self.target.clone(),
            blocks: self
                .blocks
                .iter()
                .filter(|(&(y, x), _)| keep(y, x))
                .map(|(&k, b)| (k, b.clone()))
                .collect(),
        }
    }

    /// `χ_B T χ_A`.
    pub fn corner(&self, rows: &PointSet, cols: &PointSet) -> Result<BlockOperator> {
        self.target.base.check_set(rows)?;
        self.source.base.check_set(cols)?;
        Ok(self.filter_blocks(|y, x| rows.contains(&y) && cols.contains(&x)))
    }

    /// `‖χ_B T χ_A‖` without materializing a block operator.
    pub fn corner_norm(&self, rows: &PointSet, cols: &PointSet) -> f64 {
        spectral_norm(&self.corner_matrix(rows, cols))
    }

    /// Dense submatrix of `T` restricted to the fibers of `rows × cols`.
    pub fn corner_matrix(&self, rows: &PointSet, cols: &PointSet) -> CMat {
        let row_off: BTreeMap<usize, usize> = offsets_of(rows, &self.target);
        let col_off: BTreeMap<usize, usize> = offsets_of(cols, &self.source);
        let nr: usize = rows.iter().map(|&y| self.target.fiber_dim(y)).sum();
        let nc: usize = cols.iter().map(|&x| self.source.fiber_dim(x)).sum();
        let mut m = CMat::zeros(nr, nc);
        for (&(y, x), b) in &self.blocks {
            if let (Some(&r0), Some(&c0)) = (row_off.get(&y), col_off.get(&x)) {
                m.view_mut((r0, c0), b.shape()).copy_from(b);
            }
        }
        m
    }

    pub fn norm(&self) -> f64 {
        spectral_norm(&self.to_dense())
    }

    /// Largest singular value within relative tolerance `tol`, with an
    /// attaining-vector certificate.
    pub fn operator_norm(&self, tol: f64) -> Result<NormCertificate> {
        norm_certificate(&self.to_dense(), tol)
    }

    fn check_common_base(&self) -> Result<&FiniteMetricSpace> {
        if !self.source.same_base(&self.target) {
            return Err(Error::InvalidArgument(
                "operation needs source and target over the same base space".into(),
            ));
        }
        Ok(&self.source.base)
    }

    /// `max d(x, y)` over blocks whose spectral norm exceeds `tol`; `0` for
    /// the zero operator.
    pub fn propagation(&self, tol: f64) -> Result<f64> {
        let base = self.check_common_base()?;
        if !(tol >= 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance {tol} must be >= 0")));
        }
        let mut best = 0.0f64;
        for (&(y, x), b) in &self.blocks {
            let d = base.dist(x, y);
            if d > best && spectral_norm(b) > tol {
                best = d;
            }
        }
        Ok(best)
    }

    /// Zeroes every block with `d(x, y) > radius`.
    pub fn band_truncate(&self, radius: f64) -> Result<BlockOperator> {
        let base = self.check_common_base()?.clone();
        Ok(self.filter_blocks(|y, x| base.dist(x, y) <= radius))
    }

    /// The part of `T` living exactly at distance `k`.
    pub fn band_part(&self, k: f64) -> Result<BlockOperator> {
        let base = self.check_common_base()?.clone();
        Ok(self.filter_blocks(|y, x| base.dist(x, y) == k))
    }

    /// `max(‖T*T − I‖, ‖TT* − I‖)`; infinite if the total dimensions differ.
    pub fn unitarity_residual(&self) -> f64 {
        if self.source.total_dim() != self.target.total_dim() {
            return f64::INFINITY;
        }
        let m = self.to_dense();
        let n = m.ncols();
        let id = CMat::identity(n, n);
        let a = spectral_norm(&(m.ad_mul(&m) - &id));
        let b = spectral_norm(&(&m * m.adjoint() - &id));
        a.max(b)
    }

    pub fn check_unitary(&self, tol: f64) -> Result<()> {
        let r = self.unitarity_residual();
        if r <= tol {
            Ok(())
        } else {
            Err(Error::NotUnitary(r))
        }
    }
}

fn offsets_of(set: &PointSet, space: &FiberedSpace) -> BTreeMap<usize, usize> {
    let mut acc = 0;
    set.iter()
        .map(|&p| {
            let o = acc;
            acc += space.fiber_dim(p);
            (p, o)
        })
        .collect()
}

/// Orthogonal projection onto the fibers over `set`.
pub fn indicator(space: &FiberedSpace, set: &PointSet) -> Result<BlockOperator> {
    space.base.check_set(set)?;
    let blocks = set
        .iter()
        .map(|&x| {
            let d = space.fiber_dim(x);
            ((x, x), CMat::identity(d, d))
        })
        .collect();
    Ok(BlockOperator {
        source: space.clone(),
        target: space.clone(),
        blocks,
    })
}

/// Product of `layers` layers of disjoint random `U(2)` rotations, each acting
/// on a pair of basis vectors whose points are within `radius` of each other.
/// Propagation is at most `layers * radius`.
pub fn random_band_unitary(
    space: &FiberedSpace,
    radius: f64,
    layers: usize,
    seed: u64,
) -> Result<BlockOperator> {
    if !(radius >= 0.0) {
        return Err(Error::InvalidArgument(format!("radius {radius} must be >= 0")));
    }
    let n = space.total_dim();
    let base = space.base();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = CMat::identity(n, n);
    let point: Vec<usize> = (0..n).map(|k| space.point_of(k)).collect();
    for _ in 0..layers {
        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let mut paired = vec![false; n];
        for &i in &order {
            if paired[i] {
                continue;
            }
            let candidates: Vec<usize> = (0..n)
                .filter(|&j| j != i && !paired[j] && base.dist(point[i], point[j]) <= radius)
                .collect();
            if candidates.is_empty() {
                continue;
            }
            let j = candidates[rng.gen_range(0..candidates.len())];
            paired[i] = true;
            paired[j] = true;
            let g = random_u2(&mut rng);
            // Left-multiply rows i and j by the 2x2 rotation.
            for c in 0..n {
                let (a, b) = (u[(i, c)], u[(j, c)]);
                u[(i, c)] = g[0][0] * a + g[0][1] * b;
                u[(j, c)] = g[1][0] * a + g[1][1] * b;
            }
        }
    }
    BlockOperator::from_dense(space.clone(), space.clone(), &u)
}

fn random_u2(rng: &mut ChaCha8Rng) -> [[C64; 2]; 2] {
    use std::f64::consts::TAU;
    let theta = rng.gen::<f64>() * TAU;
    let (phi, psi, chi) = (rng.gen::<f64>() * TAU, rng.gen::<f64>() * TAU, rng.gen::<f64>() * TAU);
    let (c, s) = (theta.cos(), theta.sin());
    let global = C64::from_polar(1.0, phi / 2.0);
    let e = |t: f64| C64::from_polar(1.0, t);
    [
        [global * e(psi) * c, global * e(chi) * s],
        [-global * e(-chi) * s, global * e(-psi) * c],
    ]
}
