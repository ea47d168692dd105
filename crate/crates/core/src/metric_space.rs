//! Finite metric spaces.
//!
//! A [`FiniteMetricSpace`] is an indexed point set `0..n` with a validated
//! distance matrix. Point sets are plain `BTreeSet<usize>` so that iteration
//! order (and therefore every tie-break downstream) is ascending by index.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type PointSet = BTreeSet<usize>;

/// Relative slack allowed in the triangle inequality for real-valued inputs.
const TRIANGLE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiniteMetricSpace {
    n: usize,
    dist: Vec<Vec<f64>>,
}

/// On-disk description of a space: either an explicit distance matrix or an
/// unweighted edge list whose shortest-path metric is used.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpaceSpec {
    Dist { n: usize, dist: Vec<Vec<f64>> },
    Edges { n: usize, edges: Vec<[usize; 2]> },
}

impl<'de> Deserialize<'de> for FiniteMetricSpace {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let spec = SpaceSpec::deserialize(de)?;
        FiniteMetricSpace::from_spec(&spec).map_err(serde::de::Error::custom)
    }
}

impl FiniteMetricSpace {
    /// Builds a space from a full distance matrix, validating the metric axioms.
    pub fn from_matrix(dist: Vec<Vec<f64>>) -> Result<Self> {
        let n = dist.len();
        if n == 0 {
            return Err(Error::InvalidArgument("a space needs at least one point".into()));
        }
        for (i, row) in dist.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidMetric(format!(
                    "row {i} has length {} but n = {n}",
                    row.len()
                )));
            }
            for (j, &d) in row.iter().enumerate() {
                if !d.is_finite() {
                    return Err(Error::InvalidMetric(format!("dist({i},{j}) is not finite")));
                }
                if i == j && d != 0.0 {
                    return Err(Error::InvalidMetric(format!("dist({i},{i}) = {d} is not zero")));
                }
                if i != j && d <= 0.0 {
                    return Err(Error::InvalidMetric(format!(
                        "dist({i},{j}) = {d} must be positive"
                    )));
                }
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if dist[i][j] != dist[j][i] {
                    return Err(Error::InvalidMetric(format!(
                        "dist({i},{j}) = {} differs from dist({j},{i}) = {}",
                        dist[i][j], dist[j][i]
                    )));
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let direct = dist[i][k];
                    let detour = dist[i][j] + dist[j][k];
                    if direct > detour + TRIANGLE_SLACK * direct.max(1.0) {
                        return Err(Error::InvalidMetric(format!(
                            "triangle inequality fails: dist({i},{k}) = {direct} > dist({i},{j}) + dist({j},{k}) = {detour}"
                        )));
                    }
                }
            }
        }
        Ok(Self { n, dist })
    }

    /// The path `0 - 1 - ... - (n-1)` with `dist(i, j) = |i - j|`.
    pub fn path(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("path space needs n >= 1".into()));
        }
        let dist = (0..n)
            .map(|i| (0..n).map(|j| i.abs_diff(j) as f64).collect())
            .collect();
        Ok(Self { n, dist })
    }

    /// Unweighted shortest-path metric of a connected graph.
    pub fn from_edges(n: usize, edges: &[[usize; 2]]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("a space needs at least one point".into()));
        }
        let mut adj = vec![Vec::new(); n];
        for &[a, b] in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidArgument(format!(
                    "edge ({a},{b}) out of range for n = {n}"
                )));
            }
            if a == b {
                return Err(Error::InvalidArgument(format!("self-loop at {a}")));
            }
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        let mut dist = vec![vec![0.0; n]; n];
        for s in 0..n {
            let mut hops = vec![usize::MAX; n];
            hops[s] = 0;
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for &v in &adj[u] {
                    if hops[v] == usize::MAX {
                        hops[v] = hops[u] + 1;
                        queue.push_back(v);
                    }
                }
            }
            if let Some(t) = hops.iter().position(|&h| h == usize::MAX) {
                return Err(Error::Disconnected(s, t));
            }
            for (t, &h) in hops.iter().enumerate() {
                dist[s][t] = h as f64;
            }
        }
        Ok(Self { n, dist })
    }

    pub fn from_spec(spec: &SpaceSpec) -> Result<Self> {
        match spec {
            SpaceSpec::Dist { n, dist } => {
                if dist.len() != *n {
                    return Err(Error::InvalidMetric(format!(
                        "declared n = {n} but distance matrix has {} rows",
                        dist.len()
                    )));
                }
                Self::from_matrix(dist.clone())
            }
            SpaceSpec::Edges { n, edges } => Self::from_edges(*n, edges),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn dist(&self, x: usize, y: usize) -> f64 {
        self.dist[x][y]
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.dist
    }

    pub fn diameter(&self) -> f64 {
        self.dist
            .iter()
            .flat_map(|row| row.iter().copied())
            .fold(0.0, f64::max)
    }

    /// Sorted distinct values of the distance matrix, always starting with 0.
    pub fn realized_distances(&self) -> Vec<f64> {
        let mut values: Vec<f64> = self.dist.iter().flat_map(|r| r.iter().copied()).collect();
        values.push(0.0);
        values.sort_by(f64::total_cmp);
        values.dedup();
        values
    }

    pub(crate) fn check_point(&self, x: usize) -> Result<()> {
        if x >= self.n {
            return Err(Error::InvalidArgument(format!(
                "point {x} out of range for a space of {} points",
                self.n
            )));
        }
        Ok(())
    }

    pub(crate) fn check_set(&self, set: &PointSet) -> Result<()> {
        match set.iter().next_back() {
            Some(&x) => self.check_point(x),
            None => Ok(()),
        }
    }

    /// Closed ball `{x' : d(x, x') <= radius}`.
    pub fn ball(&self, x: usize, radius: f64) -> Result<PointSet> {
        self.check_point(x)?;
        if !(radius >= 0.0) {
            return Err(Error::InvalidArgument(format!("radius {radius} must be >= 0")));
        }
        Ok((0..self.n).filter(|&p| self.dist[x][p] <= radius).collect())
    }

    /// Union of closed balls of the given radius around the points of `set`.
    pub fn neighborhood(&self, set: &PointSet, radius: f64) -> Result<PointSet> {
        self.check_set(set)?;
        if !(radius >= 0.0) {
            return Err(Error::InvalidArgument(format!("radius {radius} must be >= 0")));
        }
        Ok((0..self.n)
            .filter(|&p| set.iter().any(|&a| self.dist[a][p] <= radius))
            .collect())
    }

    /// `d(x, set)`; `+inf` for the empty set.
    pub fn dist_to_set(&self, x: usize, set: &PointSet) -> f64 {
        set.iter()
            .map(|&a| self.dist[x][a])
            .fold(f64::INFINITY, f64::min)
    }

    /// `d(a, b)` between sets; `+inf` if either is empty.
    pub fn set_distance(&self, a: &PointSet, b: &PointSet) -> f64 {
        a.iter()
            .map(|&x| self.dist_to_set(x, b))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn set_diameter(&self, set: &PointSet) -> f64 {
        let mut best = 0.0f64;
        for &a in set {
            for &b in set.range(a..) {
                best = best.max(self.dist[a][b]);
            }
        }
        best
    }

    /// `max_x |ball(x, radius)|`.
    pub fn growth_profile(&self, radius: f64) -> usize {
        (0..self.n)
            .map(|x| self.dist[x].iter().filter(|&&d| d <= radius).count())
            .max()
            .unwrap_or(0)
    }

    pub fn all_points(&self) -> PointSet {
        (0..self.n).collect()
    }

    pub fn to_spec(&self) -> SpaceSpec {
        SpaceSpec::Dist {
            n: self.n,
            dist: self.dist.clone(),
        }
    }
}
