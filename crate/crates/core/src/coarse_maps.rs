//! Maps between finite spaces and their quantitative coarse calculus.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric_space::{FiniteMetricSpace, PointSet};

/// A total function between two finite metric spaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CoarseMapRepr")]
pub struct CoarseMap {
    source: Arc<FiniteMetricSpace>,
    target: Arc<FiniteMetricSpace>,
    table: Vec<usize>,
}

#[derive(Deserialize)]
struct CoarseMapRepr {
    source: FiniteMetricSpace,
    target: FiniteMetricSpace,
    table: Vec<usize>,
}

impl TryFrom<CoarseMapRepr> for CoarseMap {
    type Error = Error;

    fn try_from(r: CoarseMapRepr) -> Result<Self> {
        CoarseMap::new(Arc::new(r.source), Arc::new(r.target), r.table)
    }
}

impl CoarseMap {
    pub fn new(
        source: Arc<FiniteMetricSpace>,
        target: Arc<FiniteMetricSpace>,
        table: Vec<usize>,
    ) -> Result<Self> {
        if table.len() != source.len() {
            return Err(Error::InvalidArgument(format!(
                "map table has {} entries but the source has {} points",
                table.len(),
                source.len()
            )));
        }
        if let Some((x, &y)) = table.iter().enumerate().find(|(_, &y)| y >= target.len()) {
            return Err(Error::InvalidArgument(format!(
                "f({x}) = {y} is outside a target of {} points",
                target.len()
            )));
        }
        Ok(Self {
            source,
            target,
            table,
        })
    }

    pub fn from_fn(
        source: Arc<FiniteMetricSpace>,
        target: Arc<FiniteMetricSpace>,
        f: impl Fn(usize) -> usize,
    ) -> Result<Self> {
        let table = (0..source.len()).map(f).collect();
        Self::new(source, target, table)
    }

    pub fn identity(space: Arc<FiniteMetricSpace>) -> Self {
        let table = (0..space.len()).collect();
        Self {
            source: space.clone(),
            target: space,
            table,
        }
    }

    pub fn source(&self) -> &Arc<FiniteMetricSpace> {
        &self.source
    }

    pub fn target(&self) -> &Arc<FiniteMetricSpace> {
        &self.target
    }

    pub fn table(&self) -> &[usize] {
        &self.table
    }

    #[inline]
    pub fn apply(&self, x: usize) -> usize {
        self.table[x]
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &CoarseMap) -> Result<CoarseMap> {
        if inner.target.as_ref() != self.source.as_ref() {
            return Err(Error::InvalidArgument(
                "composition: inner target differs from outer source".into(),
            ));
        }
        let table = inner.table.iter().map(|&y| self.table[y]).collect();
        Ok(CoarseMap {
            source: inner.source.clone(),
            target: self.target.clone(),
            table,
        })
    }

    pub fn is_injective_on(&self, set: &PointSet) -> bool {
        let mut seen = PointSet::new();
        set.iter().all(|&x| seen.insert(self.table[x]))
    }

    pub fn is_bijective(&self) -> bool {
        self.source.len() == self.target.len() && self.is_injective_on(&self.source.all_points())
    }
}

/// `max { d(f(x), f(x')) : d(x, x') <= r }`.
pub fn control_modulus(f: &CoarseMap, r: f64) -> f64 {
    let (src, tgt) = (&f.source, &f.target);
    let n = src.len();
    let mut best = 0.0f64;
    for x in 0..n {
        for x2 in x..n {
            if src.dist(x, x2) <= r {
                best = best.max(tgt.dist(f.table[x], f.table[x2]));
            }
        }
    }
    best
}

/// Moduli sampled at integer radii `0..=ceil(diam(source))`.
pub fn modulus_profile(f: &CoarseMap) -> Vec<f64> {
    let top = f.source.diameter().ceil() as usize;
    (0..=top).map(|r| control_modulus(f, r as f64)).collect()
}

/// `max_x d(f(x), g(x))`.
pub fn closeness(f: &CoarseMap, g: &CoarseMap) -> Result<f64> {
    if f.source != g.source || f.target != g.target {
        return Err(Error::InvalidArgument(
            "closeness needs maps with the same source and target".into(),
        ));
    }
    Ok(f.table
        .iter()
        .zip(&g.table)
        .map(|(&a, &b)| f.target.dist(a, b))
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub modulus_f: Vec<f64>,
    pub modulus_g: Vec<f64>,
    /// `closeness(f ∘ g, id_Y)`.
    pub closeness_fg: f64,
    /// `closeness(g ∘ f, id_X)`.
    pub closeness_gf: f64,
    pub verdict: bool,
}

/// Measures how far `f: X → Y` and `g: Y → X` are from being mutually
/// inverse coarse equivalences.
pub fn certify_equivalence(f: &CoarseMap, g: &CoarseMap) -> Result<EquivalenceReport> {
    if f.source != g.target || f.target != g.source {
        return Err(Error::InvalidArgument(
            "certify_equivalence needs f: X -> Y and g: Y -> X".into(),
        ));
    }
    let fg = f.compose(g)?;
    let gf = g.compose(f)?;
    let closeness_fg = closeness(&fg, &CoarseMap::identity(f.target.clone()))?;
    let closeness_gf = closeness(&gf, &CoarseMap::identity(f.source.clone()))?;
    let modulus_f = modulus_profile(f);
    let modulus_g = modulus_profile(g);
    let monotone = |m: &[f64]| m.windows(2).all(|w| w[0] <= w[1]);
    let verdict = closeness_fg.is_finite()
        && closeness_gf.is_finite()
        && monotone(&modulus_f)
        && monotone(&modulus_g);
    Ok(EquivalenceReport {
        modulus_f,
        modulus_g,
        closeness_fg,
        closeness_gf,
        verdict,
    })
}

/// Greedy maximal `s`-separated subset (pairwise distances `> s`), scanning
/// points in ascending index order.
pub fn greedy_net(space: &FiniteMetricSpace, s: f64) -> PointSet {
    let order: Vec<usize> = (0..space.len()).collect();
    greedy_net_ordered(space, s, &order)
}

/// Same as [`greedy_net`] but scanning points in the given order. Different
/// orders give different (equally valid) nets.
pub fn greedy_net_ordered(space: &FiniteMetricSpace, s: f64, order: &[usize]) -> PointSet {
    let mut net: Vec<usize> = Vec::new();
    for &x in order {
        if net.iter().all(|&p| space.dist(p, x) > s) {
            net.push(x);
        }
    }
    net.into_iter().collect()
}

/// Assigns every point to its nearest net point, ties to the smallest net index.
pub fn voronoi_partition(
    space: &FiniteMetricSpace,
    net: &PointSet,
) -> Result<BTreeMap<usize, PointSet>> {
    if net.is_empty() {
        return Err(Error::InvalidArgument("voronoi partition needs a nonempty net".into()));
    }
    space.check_set(net)?;
    let mut blocks: BTreeMap<usize, PointSet> = net.iter().map(|&p| (p, PointSet::new())).collect();
    for x in 0..space.len() {
        let mut best = (f64::INFINITY, usize::MAX);
        for &p in net {
            let d = space.dist(x, p);
            if d < best.0 {
                best = (d, p);
            }
        }
        blocks.get_mut(&best.1).expect("net point").insert(x);
    }
    Ok(blocks)
}

/// `max_x d(x, net)`.
pub fn covering_radius(space: &FiniteMetricSpace, net: &PointSet) -> f64 {
    (0..space.len())
        .map(|x| space.dist_to_set(x, net))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> Arc<FiniteMetricSpace> {
        Arc::new(FiniteMetricSpace::path(n).unwrap())
    }

    fn set(items: &[usize]) -> PointSet {
        items.iter().copied().collect()
    }

    #[test]
    fn moduli() {
        let p10 = path(10);
        let id = CoarseMap::identity(p10.clone());
        assert_eq!(control_modulus(&id, 3.0), 3.0);
        assert_eq!(control_modulus(&id, 2.5), 2.0);
        let half = CoarseMap::from_fn(p10.clone(), path(5), |i| i / 2).unwrap();
        assert_eq!(control_modulus(&half, 3.0), 2.0);
        let constant = CoarseMap::from_fn(p10, path(5), |_| 3).unwrap();
        assert_eq!(control_modulus(&constant, 9.0), 0.0);
    }

    #[test]
    fn closeness_examples() {
        let n = 7;
        let p = path(n);
        let id = CoarseMap::identity(p.clone());
        assert_eq!(closeness(&id, &id).unwrap(), 0.0);
        let shift = CoarseMap::from_fn(p.clone(), p.clone(), |i| (i + 1).min(n - 1)).unwrap();
        assert_eq!(closeness(&id, &shift).unwrap(), 1.0);
        let other = CoarseMap::from_fn(p, path(8), |i| i).unwrap();
        assert!(closeness(&id, &other).is_err());
    }

    #[test]
    fn certify_collapse() {
        let (x, y) = (path(10), path(5));
        let f = CoarseMap::from_fn(x.clone(), y.clone(), |i| i / 2).unwrap();
        let g = CoarseMap::from_fn(y.clone(), x.clone(), |j| 2 * j).unwrap();
        let rep = certify_equivalence(&f, &g).unwrap();
        assert_eq!(rep.closeness_gf, 1.0);
        assert_eq!(rep.closeness_fg, 0.0);
        assert!(rep.verdict);
        assert_eq!(rep.modulus_f.len(), 10);
        assert!(certify_equivalence(&f, &f).is_err());

        let id = CoarseMap::identity(x.clone());
        let rep = certify_equivalence(&id, &id).unwrap();
        assert_eq!((rep.closeness_fg, rep.closeness_gf), (0.0, 0.0));

        let constant = CoarseMap::from_fn(x.clone(), y.clone(), |_| 0).unwrap();
        let rep = certify_equivalence(&constant, &g).unwrap();
        assert_eq!(rep.closeness_fg, 4.0);
        assert_eq!(rep.closeness_gf, 9.0);
    }

    #[test]
    fn nets() {
        let p7 = path(7);
        assert_eq!(greedy_net(&p7, 0.0), p7.all_points());
        assert_eq!(greedy_net(&p7, 2.0), set(&[0, 3, 6]));
        assert_eq!(greedy_net(&p7, 6.0), set(&[0]));
        assert_eq!(greedy_net(&p7, 100.0), set(&[0]));
        assert_eq!(greedy_net_ordered(&p7, 2.0, &[6, 5, 4, 3, 2, 1, 0]), set(&[0, 3, 6]));
        assert_eq!(greedy_net_ordered(&p7, 2.0, &[1, 0, 2, 3, 4, 5, 6]), set(&[1, 4]));
    }

    #[test]
    fn voronoi() {
        let p7 = path(7);
        let blocks = voronoi_partition(&p7, &set(&[0, 3, 6])).unwrap();
        let got: Vec<PointSet> = blocks.values().cloned().collect();
        assert_eq!(got, vec![set(&[0, 1]), set(&[2, 3, 4]), set(&[5, 6])]);
        let singletons = voronoi_partition(&p7, &p7.all_points()).unwrap();
        assert!(singletons.iter().all(|(k, b)| b == &set(&[*k])));
        let one = voronoi_partition(&p7, &set(&[0])).unwrap();
        assert_eq!(one[&0], p7.all_points());
        assert!(voronoi_partition(&p7, &PointSet::new()).is_err());
    }

    #[test]
    fn map_json_roundtrip() {
        let f = CoarseMap::from_fn(path(4), path(2), |i| i / 2).unwrap();
        let text = serde_json::to_string(&f).unwrap();
        let back: CoarseMap = serde_json::from_str(&text).unwrap();
        assert_eq!(back, f);
        let bad = r#"{"source": {"n": 2, "edges": [[0,1]]}, "target": {"n": 1, "dist": [[0]]}, "table": [0, 1]}"#;
        assert!(serde_json::from_str::<CoarseMap>(bad).is_err());
    }
}
