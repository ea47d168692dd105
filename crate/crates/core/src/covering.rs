//! Covering unitaries, approximation by operators supported on a map, the
//! propagation-zero upgrade, and the outer-automorphism roundtrip.

use std::collections::{BTreeMap, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coarse_maps::{closeness, greedy_net_ordered, voronoi_partition, CoarseMap};
use crate::error::{Error, Result};
use crate::extraction::{extract_pair, ExtractionReport};
use crate::linalg::{columns_to_matrix, extend_orthonormal, orthonormalize, CMat, CVec, C64};
use crate::locality::{approximability_window, supported_distance_upper, LocalityConfig, Window};
use crate::metric_space::PointSet;
use crate::operators::{BlockOperator, FiberedSpace, DEFAULT_PROPAGATION_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoveringStrategy {
    /// Net, Voronoi partitions on both sides, block-wise basis bijections.
    NetPartition,
    /// Prescribed target fibers; basis vectors matched by a bottleneck flow.
    Transport,
}

/// Everything needed to reproduce a covering unitary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoveringPlan {
    pub strategy: CoveringStrategy,
    pub separation: f64,
    pub net: Vec<usize>,
    /// `x₀ → X(x₀)`.
    pub source_blocks: BTreeMap<usize, Vec<usize>>,
    /// `x₀ → Y(x₀)`.
    pub target_blocks: BTreeMap<usize, Vec<usize>>,
    pub source_fibers: Vec<usize>,
    pub target_fibers: Vec<usize>,
    /// Source basis index `k` goes to target basis index `assignment[k]`.
    pub assignment: Vec<usize>,
    pub max_block_diameter: f64,
    /// `max d(f(x), y)` over nonzero blocks `(y, x)`.
    pub support_radius: f64,
}

#[derive(Debug, Clone, Default)]
pub struct CoveringOptions {
    /// Starting separation for the net search.
    pub separation: f64,
    /// Scan order for the greedy net; ascending indices when absent.
    pub net_order: Option<Vec<usize>>,
}

fn check_source(f: &CoarseMap, source: &FiberedSpace) -> Result<()> {
    if f.source().as_ref() != source.base().as_ref() {
        return Err(Error::InvalidArgument(
            "map source differs from the fibered space's base".into(),
        ));
    }
    Ok(())
}

fn permutation_operator(
    source: &FiberedSpace,
    target: &FiberedSpace,
    assignment: &[usize],
) -> Result<BlockOperator> {
    let mut blocks: BTreeMap<(usize, usize), CMat> = BTreeMap::new();
    for (k, &j) in assignment.iter().enumerate() {
        let (x, y) = (source.point_of(k), target.point_of(j));
        let block = blocks
            .entry((y, x))
            .or_insert_with(|| CMat::zeros(target.fiber_dim(y), source.fiber_dim(x)));
        block[(j - target.range(y).start, k - source.range(x).start)] = C64::from(1.0);
    }
    BlockOperator::from_blocks(source.clone(), target.clone(), blocks)
}

fn support_of(f: &CoarseMap, source: &FiberedSpace, target: &FiberedSpace, assignment: &[usize]) -> f64 {
    assignment
        .iter()
        .enumerate()
        .map(|(k, &j)| f.target().dist(f.apply(source.point_of(k)), target.point_of(j)))
        .fold(0.0, f64::max)
}

/// Covering unitary for `f` with target fibers reconciled block by block so
/// that the result is exactly unitary. The net separation ascends in steps of
/// 1 from `opts.separation` until `f` is injective on the net and every
/// target block can receive at least one basis vector per point.
pub fn covering_unitary(
    f: &CoarseMap,
    source: &FiberedSpace,
    opts: &CoveringOptions,
) -> Result<(BlockOperator, CoveringPlan)> {
    check_source(f, source)?;
    if !(opts.separation >= 0.0) {
        return Err(Error::InvalidArgument("separation must be >= 0".into()));
    }
    let (x_space, y_space) = (f.source().clone(), f.target().clone());
    let order: Vec<usize> = match &opts.net_order {
        Some(o) => {
            let mut sorted = o.clone();
            sorted.sort_unstable();
            if sorted != (0..x_space.len()).collect::<Vec<_>>() {
                return Err(Error::InvalidArgument("net order must be a permutation of the points".into()));
            }
            o.clone()
        }
        None => (0..x_space.len()).collect(),
    };
    let diameter = x_space.diameter();
    let mut s = opts.separation;
    let mut last_reason = String::from("no separation tried");
    while s <= diameter + 1.0 {
        let net = greedy_net_ordered(&x_space, s, &order);
        if !f.is_injective_on(&net) {
            last_reason = format!("f is not injective on the net at separation {s}");
            s += 1.0;
            continue;
        }
        let x_blocks = voronoi_partition(&x_space, &net)?;
        let images: PointSet = net.iter().map(|&p| f.apply(p)).collect();
        let by_image = voronoi_partition(&y_space, &images)?;
        let y_blocks: BTreeMap<usize, PointSet> = net
            .iter()
            .map(|&p| (p, by_image[&f.apply(p)].clone()))
            .collect();
        let mut target_fibers = vec![0usize; y_space.len()];
        let mut feasible = true;
        for (&p, xs) in &x_blocks {
            let total: usize = xs.iter().map(|&x| source.fiber_dim(x)).sum();
            let ys = &y_blocks[&p];
            if total < ys.len() {
                last_reason = format!(
                    "block of {p} carries dimension {total} but its target block has {} points",
                    ys.len()
                );
                feasible = false;
                break;
            }
            let (share, extra) = (total / ys.len(), total % ys.len());
            for (i, &y) in ys.iter().enumerate() {
                target_fibers[y] = share + usize::from(i < extra);
            }
        }
        if !feasible {
            s += 1.0;
            continue;
        }
        let target = FiberedSpace::new(y_space.clone(), target_fibers.clone())?;
        let mut assignment = vec![0usize; source.total_dim()];
        for (&p, xs) in &x_blocks {
            let src_idx = xs.iter().flat_map(|&x| source.range(x));
            let tgt_idx = y_blocks[&p].iter().flat_map(|&y| target.range(y));
            for (k, j) in src_idx.zip(tgt_idx) {
                assignment[k] = j;
            }
        }
        let op = permutation_operator(source, &target, &assignment)?;
        let max_block_diameter = x_blocks
            .values()
            .map(|b| x_space.set_diameter(b))
            .chain(y_blocks.values().map(|b| y_space.set_diameter(b)))
            .fold(0.0, f64::max);
        let plan = CoveringPlan {
            strategy: CoveringStrategy::NetPartition,
            separation: s,
            net: net.iter().copied().collect(),
            source_blocks: x_blocks.into_iter().map(|(k, v)| (k, v.into_iter().collect())).collect(),
            target_blocks: y_blocks.into_iter().map(|(k, v)| (k, v.into_iter().collect())).collect(),
            source_fibers: source.fiber_dims().to_vec(),
            target_fibers,
            support_radius: support_of(f, source, &target, &assignment),
            assignment,
            max_block_diameter,
        };
        return Ok((op, plan));
    }
    Err(Error::Infeasible(format!("no usable net found: {last_reason}")))
}

/// Integer max-flow with capacities on points; returns `flow[x][y]`.
fn point_flow(supply: &[usize], demand: &[usize], allowed: impl Fn(usize, usize) -> bool) -> Option<Vec<Vec<usize>>> {
    let (n, m) = (supply.len(), demand.len());
    let mut flow = vec![vec![0usize; m]; n];
    let mut out_left: Vec<usize> = supply.to_vec();
    let mut in_left: Vec<usize> = demand.to_vec();
    let need: usize = supply.iter().sum();
    let mut sent = 0;
    // Augmenting paths alternate source-point → target-point (forward, if
    // allowed) and target-point → source-point (backward, along positive flow).
    while sent < need {
        let mut prev_x: Vec<Option<usize>> = vec![None; m];
        let mut prev_y: Vec<Option<usize>> = vec![None; n];
        let mut seen_x = vec![false; n];
        let mut queue: VecDeque<usize> = VecDeque::new();
        for x in 0..n {
            if out_left[x] > 0 {
                seen_x[x] = true;
                queue.push_back(x);
            }
        }
        let mut end = None;
        'bfs: while let Some(x) = queue.pop_front() {
            for y in 0..m {
                if prev_x[y].is_none() && allowed(x, y) {
                    prev_x[y] = Some(x);
                    if in_left[y] > 0 {
                        end = Some(y);
                        break 'bfs;
                    }
                    for x2 in 0..n {
                        if !seen_x[x2] && flow[x2][y] > 0 {
                            seen_x[x2] = true;
                            prev_y[x2] = Some(y);
                            queue.push_back(x2);
                        }
                    }
                }
            }
        }
        let mut y = end?;
        in_left[y] -= 1;
        loop {
            let x = prev_x[y].expect("path");
            flow[x][y] += 1;
            match prev_y[x] {
                Some(y_prev) => {
                    flow[x][y_prev] -= 1;
                    y = y_prev;
                }
                None => {
                    out_left[x] -= 1;
                    break;
                }
            }
        }
        sent += 1;
    }
    Some(flow)
}

/// Covering unitary onto a prescribed target fibered space: basis vectors at
/// `x` are sent to points `y` with `d(f(x), y) <= ρ` for the smallest realized
/// `ρ` admitting a dimension-preserving matching.
pub fn covering_unitary_onto(
    f: &CoarseMap,
    source: &FiberedSpace,
    target: &FiberedSpace,
) -> Result<(BlockOperator, CoveringPlan)> {
    check_source(f, source)?;
    if f.target().as_ref() != target.base().as_ref() {
        return Err(Error::InvalidArgument("map target differs from the target base".into()));
    }
    if source.total_dim() != target.total_dim() {
        return Err(Error::Infeasible(format!(
            "total dimensions differ ({} vs {})",
            source.total_dim(),
            target.total_dim()
        )));
    }
    let y_space = f.target().clone();
    for rho in y_space.realized_distances() {
        let allowed = |x: usize, y: usize| y_space.dist(f.apply(x), y) <= rho;
        let Some(flow) = point_flow(source.fiber_dims(), target.fiber_dims(), allowed) else {
            continue;
        };
        let mut next_slot: Vec<usize> = (0..target.len()).map(|y| target.range(y).start).collect();
        let mut assignment = vec![0usize; source.total_dim()];
        for x in 0..source.len() {
            let mut ks = source.range(x);
            for (y, &count) in flow[x].iter().enumerate() {
                for _ in 0..count {
                    let k = ks.next().expect("flow respects supply");
                    assignment[k] = next_slot[y];
                    next_slot[y] += 1;
                }
            }
        }
        let op = permutation_operator(source, target, &assignment)?;
        let plan = CoveringPlan {
            strategy: CoveringStrategy::Transport,
            separation: 0.0,
            net: Vec::new(),
            source_blocks: BTreeMap::new(),
            target_blocks: BTreeMap::new(),
            source_fibers: source.fiber_dims().to_vec(),
            target_fibers: target.fiber_dims().to_vec(),
            support_radius: support_of(f, source, target, &assignment),
            assignment,
            max_block_diameter: 0.0,
        };
        return Ok((op, plan));
    }
    Err(Error::Infeasible("no dimension-preserving matching exists".into()))
}

/// Upper bounds on the distance from `U` to operators `R`-supported on `f`,
/// one per requested radius. An `R'`-supported operator is also
/// `R`-supported for `R >= R'`, so each entry is the smallest
/// `‖U − M_{R'}(U)‖` over listed `R' <= R`; the curve is nonincreasing.
pub fn supported_approximation_curve(u: &BlockOperator, f: &CoarseMap, radii: &[f64]) -> Result<Vec<(f64, f64)>> {
    let raw: Vec<f64> = radii
        .iter()
        .map(|&r| supported_distance_upper(u, f, r))
        .collect::<Result<_>>()?;
    Ok(radii
        .iter()
        .map(|&r| {
            let best = radii
                .iter()
                .zip(&raw)
                .filter(|(&q, _)| q <= r)
                .map(|(_, &e)| e)
                .fold(f64::INFINITY, f64::min);
            (r, best)
        })
        .collect())
}

/// One finite-rank piece `p_{x_i}`: a point and vectors spanning `E_i`.
#[derive(Debug, Clone)]
pub struct ProjectionPiece {
    pub point: usize,
    pub span: Vec<CVec>,
}

#[derive(Debug, Clone)]
pub struct UpgradeResult {
    /// Unitary of propagation zero.
    pub v: BlockOperator,
    /// Operator `R`-supported on `f`.
    pub t: BlockOperator,
    /// `‖t − U V p‖`.
    pub error: f64,
    pub radius: f64,
    /// Norms of the discarded pieces `χ_{C_i} U (χ_{x_i} ⊗ V_i) p_{x_i}`.
    pub discarded_norms: Vec<f64>,
    /// Largest `‖D_j D_i*‖` or `‖D_i* D_j‖` over `i ≠ j`.
    pub orthogonality_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpgradeSummary {
    pub error: f64,
    pub radius: f64,
    pub orthogonality_residual: f64,
    pub max_discarded: f64,
}

impl UpgradeResult {
    pub fn summary(&self) -> UpgradeSummary {
        UpgradeSummary {
            error: self.error,
            radius: self.radius,
            orthogonality_residual: self.orthogonality_residual,
            max_discarded: self.discarded_norms.iter().copied().fold(0.0, f64::max),
        }
    }
}

const ORTHOGONALITY_TOL: f64 = 1e-9;

/// Smallest realized radius with `max_x ‖χ_{Y∖B̄(f(x);R)} U χ_x‖ <= epsilon`.
pub fn corner_decay_radius(u: &BlockOperator, f: &CoarseMap, epsilon: f64) -> Result<f64> {
    let y_space = u.target().base().clone();
    for r in y_space.realized_distances() {
        let worst = (0..u.source().len())
            .map(|x| {
                let far: PointSet = (0..y_space.len()).filter(|&y| y_space.dist(f.apply(x), y) > r).collect();
                u.corner_norm(&far, &PointSet::from([x]))
            })
            .fold(0.0, f64::max);
        if worst <= epsilon {
            return Ok(r);
        }
    }
    unreachable!("at the diameter every far set is empty")
}

/// Given `p = Σ p_{x_i}`, builds a propagation-zero unitary `V` and an
/// operator `t` supported within `R` of `f` with `‖t − U V p‖ <= ε`.
/// Requires `d_{x_i} >= dim E_i + dim χ_{x_i}(F_i)` at every step.
pub fn upgrade_trick(
    u: &BlockOperator,
    f: &CoarseMap,
    pieces: &[ProjectionPiece],
    epsilon: f64,
    seed: u64,
) -> Result<UpgradeResult> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon {epsilon} must be > 0")));
    }
    let (src, tgt) = (u.source().clone(), u.target().clone());
    check_source(f, &src)?;
    if f.target().as_ref() != tgt.base().as_ref() {
        return Err(Error::InvalidArgument("map target differs from the operator's target base".into()));
    }
    let mut seen = PointSet::new();
    for p in pieces {
        src.base().check_point(p.point)?;
        if !seen.insert(p.point) {
            return Err(Error::InvalidArgument(format!("point {} appears twice", p.point)));
        }
        if p.span.iter().any(|v| v.len() != src.fiber_dim(p.point)) {
            return Err(Error::ShapeMismatch(format!("span vectors at {} have the wrong dimension", p.point)));
        }
    }
    let radius = corner_decay_radius(u, f, epsilon)?;
    let y_space = tgt.base().clone();
    let dense = u.to_dense();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let far_sets: Vec<PointSet> = pieces
        .iter()
        .map(|p| (0..y_space.len()).filter(|&y| y_space.dist(f.apply(p.point), y) > radius).collect())
        .collect();
    let bases: Vec<Vec<CVec>> = pieces.iter().map(|p| orthonormalize(&p.span, 1e-10)).collect();
    // Images U (χ_{x_j} ⊗ V_j) e for e in the basis of E_j, as full vectors over Y.
    let mut images: Vec<Vec<CVec>> = Vec::with_capacity(pieces.len());
    let mut rotations: Vec<CMat> = Vec::with_capacity(pieces.len());

    for (i, piece) in pieces.iter().enumerate() {
        let x = piece.point;
        let d = src.fiber_dim(x);
        let rx = src.range(x);
        let e_basis = &bases[i];
        // χ_{x_i}(F_i), F_i spanned by U* χ_{C_i ∩ C_j} U (χ_{x_j} ⊗ V_j)(E_j), j < i.
        let mut restricted = Vec::new();
        for j in 0..i {
            let common: Vec<usize> = far_sets[i]
                .intersection(&far_sets[j])
                .flat_map(|&y| tgt.range(y))
                .collect();
            for img in &images[j] {
                let mut w = CVec::zeros(tgt.total_dim());
                for &r in &common {
                    w[r] = img[r];
                }
                let back = dense.ad_mul(&w);
                restricted.push(back.rows(rx.start, rx.len()).into_owned());
            }
        }
        let f_basis = orthonormalize(&restricted, 1e-10);
        if d < e_basis.len() + f_basis.len() {
            let a_priori: usize = bases[..=i].iter().map(|b| b.len()).sum();
            return Err(Error::Infeasible(format!(
                "fiber at {x} has dimension {d} but needs at least {} (dim E = {}, dim χ_x F = {}); dimension {a_priori} always suffices",
                e_basis.len() + f_basis.len(),
                e_basis.len(),
                f_basis.len()
            )));
        }
        let w_basis = extend_orthonormal(&f_basis, d, e_basis.len(), &mut rng);
        let e_rest = extend_orthonormal(e_basis, d, d - e_basis.len(), &mut rng);
        let w_rest = extend_orthonormal(&w_basis, d, d - e_basis.len(), &mut rng);
        let from = columns_to_matrix(d, &[e_basis.clone(), e_rest].concat());
        let to = columns_to_matrix(d, &[w_basis, w_rest].concat());
        let v_i = &to * from.adjoint();
        let cols = dense.columns(rx.start, rx.len());
        images.push(e_basis.iter().map(|e| cols * (&v_i * e)).collect());
        rotations.push(v_i);
    }

    let mut v_blocks: BTreeMap<(usize, usize), CMat> = (0..src.len())
        .map(|x| ((x, x), CMat::identity(src.fiber_dim(x), src.fiber_dim(x))))
        .collect();
    let mut p_blocks = BTreeMap::new();
    for (i, piece) in pieces.iter().enumerate() {
        v_blocks.insert((piece.point, piece.point), rotations[i].clone());
        let q = columns_to_matrix(src.fiber_dim(piece.point), &bases[i]);
        p_blocks.insert((piece.point, piece.point), &q * q.adjoint());
    }
    let v = BlockOperator::from_blocks(src.clone(), src.clone(), v_blocks)?;
    let uv = u.compose(&v)?;

    let mut t = BlockOperator::zeros(src.clone(), tgt.clone());
    let mut discarded = Vec::with_capacity(pieces.len());
    let mut full = BlockOperator::zeros(src.clone(), src.clone());
    for (i, piece) in pieces.iter().enumerate() {
        let single: BTreeMap<_, _> = [((piece.point, piece.point), p_blocks[&(piece.point, piece.point)].clone())].into();
        let p_i = BlockOperator::from_blocks(src.clone(), src.clone(), single)?;
        full = full.add(&p_i)?;
        let uvp = uv.compose(&p_i)?;
        let far = &far_sets[i];
        t = t.add(&uvp.filter_blocks(|y, _| !far.contains(&y)))?;
        discarded.push(uvp.filter_blocks(|y, _| far.contains(&y)));
    }
    let error = t.sub(&uv.compose(&full)?)?.norm();

    let mut orthogonality_residual = 0.0f64;
    for i in 0..discarded.len() {
        for j in 0..discarded.len() {
            if i != j {
                let a = discarded[j].compose(&discarded[i].adjoint())?.norm();
                let b = discarded[i].adjoint().compose(&discarded[j])?.norm();
                orthogonality_residual = orthogonality_residual.max(a).max(b);
            }
        }
    }
    if orthogonality_residual > ORTHOGONALITY_TOL {
        return Err(Error::Invariant(format!(
            "discarded pieces are not orthogonal (residual {orthogonality_residual:e})"
        )));
    }
    let discarded_norms: Vec<f64> = discarded.iter().map(|d| d.norm()).collect();
    Ok(UpgradeResult {
        v,
        t,
        error,
        radius,
        discarded_norms,
        orthogonality_residual,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct UnitarityResiduals {
    pub u: f64,
    pub w: f64,
    pub uw_adjoint: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OuterReport {
    pub extraction: ExtractionReport,
    pub covering: CoveringPlan,
    /// `closeness(f, id)` for the extracted `f`.
    pub displacement: f64,
    pub residuals: UnitarityResiduals,
    /// Propagation of `U W*` at the default dust tolerance.
    pub propagation_uw: f64,
    pub windows: Vec<Window>,
}

/// Extracts `f` from an automorphism-type unitary `U`, covers it with `W`, and
/// measures how close `U W*` is to bounded propagation.
pub fn outer_roundtrip(
    u: &BlockOperator,
    delta: f64,
    radii: Option<&[f64]>,
    config: &LocalityConfig,
) -> Result<OuterReport> {
    if u.source() != u.target() {
        return Err(Error::InvalidArgument("outer roundtrip needs U on a single fibered space".into()));
    }
    let extraction = extract_pair(u, delta)?;
    let space = u.source();
    let (w, covering) = match covering_unitary(&extraction.f, space, &CoveringOptions::default()) {
        Ok((w, plan)) if plan.target_fibers == space.fiber_dims() => (w, plan),
        _ => covering_unitary_onto(&extraction.f, space, space)?,
    };
    let uw = u.compose(&w.adjoint())?;
    let grid: Vec<f64> = match radii {
        Some(r) => r.to_vec(),
        None => space.base().realized_distances(),
    };
    let windows = grid
        .iter()
        .map(|&r| approximability_window(&uw, r, config))
        .collect::<Result<Vec<_>>>()?;
    let identity = CoarseMap::identity(space.base().clone());
    Ok(OuterReport {
        displacement: closeness(&extraction.f, &identity)?,
        residuals: UnitarityResiduals {
            u: u.unitarity_residual(),
            w: w.unitarity_residual(),
            uw_adjoint: uw.unitarity_residual(),
        },
        propagation_uw: uw.propagation(DEFAULT_PROPAGATION_TOL)?,
        extraction,
        covering,
        windows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::locality::support_radius;
    use crate::metric_space::FiniteMetricSpace;
    use crate::operators::random_band_unitary;
    use std::sync::Arc;

    fn path(n: usize) -> Arc<FiniteMetricSpace> {
        Arc::new(FiniteMetricSpace::path(n).unwrap())
    }

    fn unit(d: usize, k: usize) -> CVec {
        let mut v = CVec::zeros(d);
        v[k] = C64::from(1.0);
        v
    }

    #[test]
    fn identity_cover() {
        let p = path(6);
        let s = FiberedSpace::uniform(p.clone(), 2).unwrap();
        let (w, plan) = covering_unitary(&CoarseMap::identity(p), &s, &CoveringOptions::default()).unwrap();
        assert_eq!(w, BlockOperator::identity(&s));
        assert_eq!(plan.support_radius, 0.0);
        assert_eq!(plan.separation, 0.0);
    }

    #[test]
    fn reflection_cover_is_permutation() {
        let p = path(7);
        let s = FiberedSpace::uniform(p.clone(), 3).unwrap();
        let h = CoarseMap::from_fn(p.clone(), p, |i| 6 - i).unwrap();
        let (w, plan) = covering_unitary(&h, &s, &CoveringOptions::default()).unwrap();
        assert!(w.unitarity_residual() <= 1e-12);
        assert_eq!(plan.support_radius, 0.0);
        for (&(y, x), b) in w.blocks() {
            assert_eq!(y, 6 - x);
            assert_eq!(b, &CMat::identity(3, 3));
        }
    }

    #[test]
    fn collapse_reconciles_fibers() {
        let (x, y) = (path(10), path(5));
        let s = FiberedSpace::uniform(x.clone(), 1).unwrap();
        let f = CoarseMap::from_fn(x, y, |i| i / 2).unwrap();
        let (w, plan) = covering_unitary(&f, &s, &CoveringOptions::default()).unwrap();
        assert_eq!(plan.target_fibers, vec![2; 5]);
        assert_eq!(plan.separation, 1.0);
        assert!(w.unitarity_residual() <= 1e-12);
        assert_eq!(support_radius(&w, &f, 0.0).unwrap(), plan.support_radius);
        for &(yy, xx) in w.blocks().keys() {
            assert!(f.target().dist(f.apply(xx), yy) <= plan.support_radius);
        }
    }

    #[test]
    fn expanding_map_needs_fibers() {
        let (x, y) = (path(5), path(10));
        let f = CoarseMap::from_fn(x.clone(), y, |j| 2 * j).unwrap();
        let thin = FiberedSpace::uniform(x.clone(), 1).unwrap();
        assert!(matches!(covering_unitary(&f, &thin, &CoveringOptions::default()), Err(Error::Infeasible(_))));
        let thick = FiberedSpace::uniform(x, 2).unwrap();
        let (w, plan) = covering_unitary(&f, &thick, &CoveringOptions::default()).unwrap();
        assert!(w.unitarity_residual() <= 1e-12);
        assert_eq!(plan.target_fibers.iter().sum::<usize>(), 10);
    }

    #[test]
    fn different_nets_differ_by_controlled_unitary() {
        let (x, y) = (path(12), path(6));
        let s = FiberedSpace::uniform(x.clone(), 1).unwrap();
        let f = CoarseMap::from_fn(x, y, |i| i / 2).unwrap();
        let (w1, p1) = covering_unitary(&f, &s, &CoveringOptions::default()).unwrap();
        let reversed: Vec<usize> = (0..12).rev().collect();
        let opts = CoveringOptions {
            separation: 2.0,
            net_order: Some(reversed),
        };
        let (w2, p2) = covering_unitary(&f, &s, &opts).unwrap();
        assert_ne!(p1.net, p2.net);
        let prod = w1.compose(&w2.adjoint()).unwrap();
        assert!(prod.unitarity_residual() <= 1e-12);
        assert!(prod.propagation(1e-12).unwrap() <= p1.support_radius + p2.support_radius);
    }

    #[test]
    fn transport_cover_on_fixed_fibers() {
        let p = path(8);
        let s = FiberedSpace::uniform(p.clone(), 2).unwrap();
        let f = CoarseMap::from_fn(p.clone(), p, |i| (i / 2) * 2).unwrap();
        let (w, plan) = covering_unitary_onto(&f, &s, &s).unwrap();
        assert!(w.unitarity_residual() <= 1e-12);
        assert_eq!(plan.strategy, CoveringStrategy::Transport);
        assert_eq!(plan.support_radius, 1.0);
    }

    #[test]
    fn curve_examples() {
        let p = path(10);
        let s = FiberedSpace::uniform(p.clone(), 2).unwrap();
        let h = CoarseMap::from_fn(p.clone(), p, |i| 9 - i).unwrap();
        let (w, plan) = covering_unitary(&h, &s, &CoveringOptions::default()).unwrap();
        let curve = supported_approximation_curve(&w, &h, &[0.0, 1.0, 2.0]).unwrap();
        assert!(curve.iter().all(|&(_, e)| e == 0.0));
        assert_eq!(plan.support_radius, 0.0);
        let u = w.compose(&random_band_unitary(&s, 2.0, 1, 3).unwrap()).unwrap();
        let curve = supported_approximation_curve(&u, &h, &[0.0, 1.0, 2.0, 3.0, 9.0]).unwrap();
        assert!(curve.windows(2).all(|c| c[1].1 <= c[0].1 + 1e-12));
        assert_eq!(curve[2].1, 0.0);
        assert_eq!(curve[4].1, 0.0);
    }

    #[test]
    fn upgrade_with_empty_projection() {
        let p = path(5);
        let s = FiberedSpace::uniform(p.clone(), 3).unwrap();
        let u = random_band_unitary(&s, 1.0, 1, 0).unwrap();
        let res = upgrade_trick(&u, &CoarseMap::identity(p), &[], 0.1, 0).unwrap();
        assert_eq!(res.v, BlockOperator::identity(&s));
        assert_eq!(res.t.norm(), 0.0);
        assert_eq!(res.error, 0.0);
    }

    #[test]
    fn upgrade_on_exact_cover() {
        let p = path(6);
        let s = FiberedSpace::uniform(p.clone(), 3).unwrap();
        let h = CoarseMap::from_fn(p.clone(), p, |i| 5 - i).unwrap();
        let (w, plan) = covering_unitary(&h, &s, &CoveringOptions::default()).unwrap();
        let pieces = vec![
            ProjectionPiece { point: 1, span: vec![unit(3, 0)] },
            ProjectionPiece { point: 4, span: vec![unit(3, 1), unit(3, 2)] },
        ];
        let res = upgrade_trick(&w, &h, &pieces, 0.1, 7).unwrap();
        assert_eq!(res.radius, plan.support_radius);
        assert!(res.error <= 1e-15);
        assert_eq!(res.v.propagation(1e-12).unwrap(), 0.0);
        assert!(res.v.unitarity_residual() <= 1e-12);
    }

    #[test]
    fn upgrade_orthogonality_and_error() {
        let p = path(12);
        let s = FiberedSpace::uniform(p.clone(), 6).unwrap();
        let u = random_band_unitary(&s, 2.0, 2, 11).unwrap();
        let id = CoarseMap::identity(p);
        let pieces: Vec<ProjectionPiece> = [2usize, 5, 9]
            .iter()
            .map(|&x| ProjectionPiece { point: x, span: vec![unit(6, 0)] })
            .collect();
        for eps in [0.1, 0.01] {
            let res = upgrade_trick(&u, &id, &pieces, eps, 3).unwrap();
            assert!(res.orthogonality_residual <= 1e-9);
            assert!(res.error <= eps);
            assert!(support_radius(&res.t, &id, 0.0).unwrap() <= res.radius);
        }
    }

    #[test]
    fn upgrade_reports_infeasible_fibers() {
        let p = path(3);
        let s = FiberedSpace::uniform(p.clone(), 1).unwrap();
        // Swap of points 0 and 2 with mixing: every far corner is large at R = 0.
        let u = random_band_unitary(&s, 2.0, 3, 1).unwrap();
        let id = CoarseMap::identity(p);
        let pieces = vec![
            ProjectionPiece { point: 0, span: vec![unit(1, 0)] },
            ProjectionPiece { point: 2, span: vec![unit(1, 0)] },
        ];
        match upgrade_trick(&u, &id, &pieces, 1e-3, 0) {
            Err(Error::Infeasible(msg)) => assert!(msg.contains("fiber at 2")),
            Ok(r) => assert!(r.radius >= 2.0 || r.error <= 1e-3),
            Err(e) => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn outer_roundtrip_on_reflection() {
        let p = path(10);
        let s = FiberedSpace::uniform(p.clone(), 2).unwrap();
        let h = CoarseMap::from_fn(p.clone(), p, |i| 9 - i).unwrap();
        let (wh, _) = covering_unitary(&h, &s, &CoveringOptions::default()).unwrap();
        let rep = outer_roundtrip(&wh, 0.5, None, &LocalityConfig::default()).unwrap();
        assert_eq!(rep.extraction.f.table(), h.table());
        assert_eq!(rep.propagation_uw, 0.0);
        assert!(rep.windows.iter().all(|w| w.upper == 0.0));

        let id_rep = outer_roundtrip(&BlockOperator::identity(&s), 0.5, Some(&[0.0, 1.0]), &LocalityConfig::default()).unwrap();
        assert_eq!(id_rep.displacement, 0.0);
        assert_eq!(id_rep.propagation_uw, 0.0);
    }

    #[test]
    fn uncorrelated_unitary_curve_stays_large() {
        use rand::Rng;
        let p = path(8);
        let s = FiberedSpace::uniform(p.clone(), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = CMat::from_fn(16, 16, |_, _| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        let q = m.qr().q();
        let u = BlockOperator::from_dense(s.clone(), s, &q).unwrap();
        let radii: Vec<f64> = (0..8).map(f64::from).collect();
        let curve = supported_approximation_curve(&u, &CoarseMap::identity(p), &radii).unwrap();
        assert!(curve[5].1 > 0.05);
        assert_eq!(curve[7].1, 0.0);
    }

    #[test]
    fn outer_roundtrip_with_band_noise() {
        let p = path(16);
        let s = FiberedSpace::uniform(p.clone(), 2).unwrap();
        let h = CoarseMap::from_fn(p.clone(), p, |i| 15 - i).unwrap();
        let (wh, plan_h) = covering_unitary(&h, &s, &CoveringOptions::default()).unwrap();
        for seed in 0..4 {
            let v = random_band_unitary(&s, 2.0, 1, seed).unwrap();
            let u = wh.compose(&v).unwrap();
            let rep = outer_roundtrip(&u, 0.5, None, &LocalityConfig::default()).unwrap();
            let drift = closeness(&rep.extraction.f, &h).unwrap();
            let bound = plan_h.support_radius + 2.0 + drift + rep.covering.support_radius;
            assert!(rep.propagation_uw <= bound);
            assert!(rep.residuals.uw_adjoint <= 1e-9);
            for w in &rep.windows {
                assert!(w.lower <= w.upper + 1e-12);
                if w.radius >= rep.propagation_uw {
                    assert_eq!(w.upper, 0.0);
                }
            }
        }
    }
}
