//! Geodesic polylines with cumulative arc length.

use crate::error::{Error, Result};
use crate::manifold::{Manifold, ManifoldPoint, TangentVector, ANTIPODAL_EPS};

/// Ordered polyline whose segments are minimizing geodesics.
///
/// `cumulative_length[0] == 0` and the sequence is strictly increasing, so
/// consecutive duplicate nodes are rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    nodes: Vec<ManifoldPoint>,
    cumulative: Vec<f64>,
}

impl Curve {
    pub fn new<M: Manifold>(m: &M, nodes: Vec<ManifoldPoint>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidCurve("curve needs at least one node".into()));
        }
        let mut cumulative = Vec::with_capacity(nodes.len());
        cumulative.push(0.0);
        for (i, pair) in nodes.windows(2).enumerate() {
            if pair[0].dot(&pair[1]) <= -1.0 + ANTIPODAL_EPS {
                return Err(Error::InvalidCurve(format!(
                    "nodes {i} and {} are antipodal",
                    i + 1
                )));
            }
            let d = m.distance(&pair[0], &pair[1]);
            if d <= 0.0 {
                return Err(Error::InvalidCurve(format!(
                    "nodes {i} and {} coincide",
                    i + 1
                )));
            }
            cumulative.push(cumulative[i] + d);
        }
        Ok(Curve { nodes, cumulative })
    }

    /// Like [`Curve::new`] but silently drops nodes that coincide with their predecessor.
    pub fn new_dedup<M: Manifold>(m: &M, nodes: Vec<ManifoldPoint>) -> Result<Self> {
        let mut kept: Vec<ManifoldPoint> = Vec::with_capacity(nodes.len());
        for p in nodes {
            if kept.last().map_or(true, |q| m.distance(q, &p) > 0.0) {
                kept.push(p);
            }
        }
        Curve::new(m, kept)
    }

    pub fn single(node: ManifoldPoint) -> Self {
        Curve {
            nodes: vec![node],
            cumulative: vec![0.0],
        }
    }

    pub fn nodes(&self) -> &[ManifoldPoint] {
        &self.nodes
    }

    pub fn cumulative_length(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Total arc length.
    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    pub fn first(&self) -> &ManifoldPoint {
        &self.nodes[0]
    }

    pub fn last(&self) -> &ManifoldPoint {
        self.nodes.last().unwrap()
    }

    pub fn reversed<M: Manifold>(&self, m: &M) -> Self {
        let mut nodes = self.nodes.clone();
        nodes.reverse();
        Curve::new(m, nodes).expect("reversal preserves curve invariants")
    }

    /// Segment index and fraction for arc length `t`, clamped to the curve.
    pub fn locate(&self, t: f64) -> (usize, f64) {
        if self.nodes.len() == 1 || t <= 0.0 {
            return (0, 0.0);
        }
        let total = self.length();
        if t >= total {
            return (self.nodes.len() - 2, 1.0);
        }
        let k = self.cumulative.partition_point(|&c| c <= t) - 1;
        let seg = self.cumulative[k + 1] - self.cumulative[k];
        (k, (t - self.cumulative[k]) / seg)
    }

    /// Point at arc length `t` (clamped to `[0, length]`).
    pub fn point_at<M: Manifold>(&self, m: &M, t: f64) -> Result<ManifoldPoint> {
        let (k, s) = self.locate(t);
        self.point_on_segment(m, k, s)
    }

    pub fn point_on_segment<M: Manifold>(&self, m: &M, k: usize, s: f64) -> Result<ManifoldPoint> {
        if self.nodes.len() == 1 {
            return Ok(self.nodes[0]);
        }
        m.geodesic_point(&self.nodes[k], &self.nodes[k + 1], s)
    }

    /// Unit tangent of segment `k` at the point with fraction `s`.
    pub fn segment_tangent<M: Manifold>(&self, m: &M, k: usize, s: f64) -> Result<TangentVector> {
        let a = self.nodes[k];
        let b = self.nodes[k + 1];
        let dir = m.log(&a, &b)?;
        let p = m.geodesic_point(&a, &b, s)?;
        let moved = m.transport(&dir, &p)?;
        Ok(moved.normalized().unwrap_or(moved))
    }

    /// Arc length of the point on segment `k` at fraction `s`.
    pub fn arc_length_at(&self, k: usize, s: f64) -> f64 {
        if self.nodes.len() == 1 {
            return 0.0;
        }
        self.cumulative[k] + s * (self.cumulative[k + 1] - self.cumulative[k])
    }

    /// Linear interpolation in arc length of a per-node quantity.
    pub fn interpolate(&self, values: &[f64], k: usize, s: f64) -> f64 {
        debug_assert_eq!(values.len(), self.nodes.len());
        if self.nodes.len() == 1 {
            return values[0];
        }
        values[k] + s * (values[k + 1] - values[k])
    }

    /// Subdivides every segment so no piece exceeds `max_spacing`.
    pub fn densified<M: Manifold>(&self, m: &M, max_spacing: f64) -> Result<Self> {
        let mut out = vec![self.nodes[0]];
        for pair in self.nodes.windows(2) {
            let d = m.distance(&pair[0], &pair[1]);
            let pieces = (d / max_spacing).ceil().max(1.0) as usize;
            for j in 1..pieces {
                out.push(m.geodesic_point(&pair[0], &pair[1], j as f64 / pieces as f64)?);
            }
            out.push(pair[1]);
        }
        Curve::new(m, out)
    }
}

/// Samples the geodesic from `a` to `b` into a curve of `pieces` equal segments.
pub fn geodesic_curve<M: Manifold>(
    m: &M,
    a: &ManifoldPoint,
    b: &ManifoldPoint,
    pieces: usize,
) -> Result<Curve> {
    let pieces = pieces.max(1);
    let mut nodes = Vec::with_capacity(pieces + 1);
    for j in 0..=pieces {
        nodes.push(m.geodesic_point(a, b, j as f64 / pieces as f64)?);
    }
    Curve::new_dedup(m, nodes)
}
