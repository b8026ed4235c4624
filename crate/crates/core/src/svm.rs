//! Hard-margin linear SVMs in tangent planes and their comparison with the
//! principal boundary.

use nalgebra::Vector2;

use crate::boundary::{distance_to_curve, BoundaryResult};
use crate::classify::ClassModel;
use crate::curve::Curve;
use crate::error::{Error, Result};
use crate::local::members_within;
use crate::manifold::{Manifold, ManifoldPoint, TangentVector};
use crate::par;

pub type Vec2 = Vector2<f64>;

/// Smallest margin accepted as a genuine separation.
const MIN_MARGIN: f64 = 1e-12;

/// A separating line `⟨normal, x⟩ = offset` in the plane, with class A on the
/// positive side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarSvm {
    pub normal: Vec2,
    pub offset: f64,
    pub margin: f64,
}

fn cross(o: &Vec2, a: &Vec2, b: &Vec2) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Indices of the convex hull in counter-clockwise order (monotone chain).
fn hull(points: &[Vec2]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&i, &j| {
        points[i]
            .x
            .total_cmp(&points[j].x)
            .then(points[i].y.total_cmp(&points[j].y))
    });
    idx.dedup_by(|a, b| points[*a] == points[*b]);
    if idx.len() < 3 {
        return idx;
    }
    let mut lower: Vec<usize> = Vec::new();
    for &i in &idx {
        while lower.len() >= 2
            && cross(
                &points[lower[lower.len() - 2]],
                &points[lower[lower.len() - 1]],
                &points[i],
            ) <= 0.0
        {
            lower.pop();
        }
        lower.push(i);
    }
    let mut upper: Vec<usize> = Vec::new();
    for &i in idx.iter().rev() {
        while upper.len() >= 2
            && cross(
                &points[upper[upper.len() - 2]],
                &points[upper[upper.len() - 1]],
                &points[i],
            ) <= 0.0
        {
            upper.pop();
        }
        upper.push(i);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Closest point to `p` on segment `ab`.
fn closest_on_segment(p: &Vec2, a: &Vec2, b: &Vec2) -> Vec2 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return *a;
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    a + ab * t
}

fn edges(h: &[usize]) -> Vec<(usize, usize)> {
    match h.len() {
        0 | 1 => Vec::new(),
        2 => vec![(h[0], h[1])],
        n => (0..n).map(|i| (h[i], h[(i + 1) % n])).collect(),
    }
}

/// Maximum-margin separating line between two planar point sets.
///
/// The hard-margin dual is the minimum distance between the convex hulls;
/// for planar hulls it is attained between a vertex of one and an edge (or
/// vertex) of the other, so every such pair is checked directly. The
/// resulting line is then verified against every point.
pub fn hard_margin_svm(a: &[Vec2], b: &[Vec2]) -> Result<PlanarSvm> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidParameter(
            "both classes need at least one point".into(),
        ));
    }
    let (ha, hb) = (hull(a), hull(b));
    // (distance, point on A's hull, point on B's hull, nearest A index, nearest B index)
    let mut best = (f64::INFINITY, a[0], b[0], 0usize, 0usize);
    let mut consider = |pa: Vec2, pb: Vec2, ia: usize, ib: usize| {
        let d = (pa - pb).norm();
        if d < best.0 {
            best = (d, pa, pb, ia, ib);
        }
    };
    for &i in &ha {
        for &j in &hb {
            consider(a[i], b[j], i, j);
        }
        for (j0, j1) in edges(&hb) {
            let c = closest_on_segment(&a[i], &b[j0], &b[j1]);
            consider(a[i], c, i, j0);
        }
    }
    for &j in &hb {
        for (i0, i1) in edges(&ha) {
            let c = closest_on_segment(&b[j], &a[i0], &a[i1]);
            consider(c, b[j], i0, j);
        }
    }
    let (dist, pa, pb, ia, ib) = best;
    if dist <= 2.0 * MIN_MARGIN {
        return Err(Error::Inseparable { a: ia, b: ib });
    }
    let normal = (pa - pb) / dist;
    let offset = normal.dot(&(0.5 * (pa + pb)));
    let margin = 0.5 * dist;
    // overlapping hulls can still have boundaries apart; the sign check catches them
    let slack = 1e-9 * (1.0 + margin);
    if let Some(i) = a
        .iter()
        .position(|x| normal.dot(x) - offset < margin - slack)
    {
        return Err(Error::Inseparable { a: i, b: ib });
    }
    if let Some(j) = b
        .iter()
        .position(|x| normal.dot(x) - offset > -margin + slack)
    {
        return Err(Error::Inseparable { a: ia, b: j });
    }
    Ok(PlanarSvm {
        normal,
        offset,
        margin,
    })
}

/// Samples of the two classes near a matching pair.
#[derive(Debug, Clone)]
pub struct LocalConfiguration {
    pub points1: Vec<ManifoldPoint>,
    pub points2: Vec<ManifoldPoint>,
}

pub fn local_configuration<M: Manifold>(
    m: &M,
    m1: &ClassModel,
    m2: &ClassModel,
    p1: &ManifoldPoint,
    p2: &ManifoldPoint,
) -> Result<LocalConfiguration> {
    let take = |model: &ClassModel, p: &ManifoldPoint| -> Result<Vec<ManifoldPoint>> {
        let idx = members_within(m, &model.cloud, p, model.h());
        if idx.is_empty() {
            return Err(Error::EmptyNeighborhood { radius: model.h() });
        }
        Ok(idx.into_iter().map(|i| model.cloud[i]).collect())
    };
    Ok(LocalConfiguration {
        points1: take(m1, p1)?,
        points2: take(m2, p2)?,
    })
}

/// A tangent-plane SVM lifted back to the manifold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalSeparator {
    pub base: ManifoldPoint,
    /// Unit normal in the tangent plane at `base`, pointing toward class 1.
    pub normal: TangentVector,
    pub offset: f64,
    pub margin: f64,
}

impl LocalSeparator {
    /// Unit direction of the separating line at `base`.
    pub fn direction(&self) -> TangentVector {
        TangentVector::new(self.base, self.base.coords().cross(self.normal.vec()))
    }

    /// Point of the separating geodesic closest to `base`.
    pub fn anchor<M: Manifold>(&self, m: &M) -> Result<ManifoldPoint> {
        m.exp(&self.normal.scaled(self.offset))
    }

    /// The separating geodesic through the anchor, parallel to the tangent line.
    pub fn geodesic<M: Manifold>(&self, m: &M, half_length: f64, pieces: usize) -> Result<Curve> {
        let anchor = self.anchor(m)?;
        let dir = m.transport(&self.direction(), &anchor)?;
        let pieces = pieces.max(1);
        let nodes = (0..=pieces)
            .map(|i| {
                let s = -half_length + 2.0 * half_length * i as f64 / pieces as f64;
                m.exp(&dir.scaled(s))
            })
            .collect::<Result<Vec<_>>>()?;
        Curve::new(m, nodes)
    }

    /// Geodesic distance from `x` to the full great circle of the separator.
    pub fn distance_to<M: Manifold>(&self, m: &M, x: &ManifoldPoint) -> Result<f64> {
        let anchor = self.anchor(m)?;
        let dir = m.transport(&self.direction(), &anchor)?;
        let pole = anchor.coords().cross(dir.vec()).normalize();
        Ok(x.coords().dot(&pole).clamp(-1.0, 1.0).asin().abs())
    }
}

/// Hard-margin SVM on a local configuration in the tangent plane at `base`.
pub fn separator_for<M: Manifold>(
    m: &M,
    config: &LocalConfiguration,
    base: &ManifoldPoint,
) -> Result<LocalSeparator> {
    let (t1, t2) = m.tangent_basis(base);
    let lift = |pts: &[ManifoldPoint]| -> Result<Vec<Vec2>> {
        pts.iter()
            .map(|x| {
                let v = m.log(base, x)?;
                Ok(Vec2::new(v.vec().dot(&t1), v.vec().dot(&t2)))
            })
            .collect()
    };
    let svm = hard_margin_svm(&lift(&config.points1)?, &lift(&config.points2)?)?;
    Ok(LocalSeparator {
        base: *base,
        normal: TangentVector::new(*base, t1 * svm.normal.x + t2 * svm.normal.y),
        offset: svm.offset,
        margin: svm.margin,
    })
}

/// SVM between the neighborhoods of a matching pair, charted at the
/// geodesic midpoint of `p1` and `p2`.
pub fn local_separator<M: Manifold>(
    m: &M,
    m1: &ClassModel,
    m2: &ClassModel,
    p1: &ManifoldPoint,
    p2: &ManifoldPoint,
) -> Result<LocalSeparator> {
    let config = local_configuration(m, m1, m2, p1, p2)?;
    let base = m.geodesic_point(p1, p2, 0.5)?;
    separator_for(m, &config, &base)
}

/// Local separators along a traced boundary.
#[derive(Debug, Clone, Default)]
pub struct PiecewiseSvm {
    /// `(boundary node index, separator)`.
    pub separators: Vec<(usize, LocalSeparator)>,
    /// Nodes whose local classes could not be separated.
    pub failures: Vec<(usize, Error)>,
}

/// One local SVM per boundary node, using the node's matching pair.
pub fn piecewise_svm_boundary<M: Manifold>(
    m: &M,
    m1: &ClassModel,
    m2: &ClassModel,
    boundary: &BoundaryResult,
) -> PiecewiseSvm {
    let results = par::map_slice(&boundary.matches, |(p1, p2)| {
        local_separator(m, m1, m2, p1, p2)
    });
    let mut out = PiecewiseSvm::default();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(s) => out.separators.push((i, s)),
            Err(e) => out.failures.push((i, e)),
        }
    }
    out
}

/// Nodes of `boundary` within `radius` index steps of node `i`.
pub fn boundary_segment<M: Manifold>(
    m: &M,
    boundary: &BoundaryResult,
    i: usize,
    radius: usize,
) -> Result<Curve> {
    let nodes = boundary.curve.nodes();
    let lo = i.saturating_sub(radius);
    let hi = (i + radius).min(nodes.len() - 1);
    Curve::new(m, nodes[lo..=hi].to_vec())
}

/// Agreement between a stretch of boundary and a local separator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equivalence {
    /// Unoriented angle between the segment chord and the separator, in `[0, π/2]`.
    pub angle: f64,
    /// Difference between the two curves' margins over the local configuration.
    pub margin_gap: f64,
}

/// Angle and margin difference between a boundary segment and a separator;
/// each curve's margin is its smallest distance to the configuration's points.
pub fn equivalence_metrics<M: Manifold>(
    m: &M,
    segment: &Curve,
    separator: &LocalSeparator,
    config: &LocalConfiguration,
) -> Result<Equivalence> {
    if segment.len() < 2 {
        return Err(Error::InvalidCurve(
            "equivalence needs a segment with two nodes".into(),
        ));
    }
    let chord = m.log(segment.first(), segment.last())?;
    let chord = m.transport(&chord, &separator.base)?;
    let chord = chord
        .normalized()
        .ok_or_else(|| Error::InvalidCurve("segment has zero length".into()))?;
    let cos = chord.dot(&separator.direction()).abs().min(1.0);
    let angle = cos.acos();

    let mut seg_margin = f64::INFINITY;
    let mut svm_margin = f64::INFINITY;
    for x in config.points1.iter().chain(&config.points2) {
        seg_margin = seg_margin.min(distance_to_curve(m, x, segment)?);
        svm_margin = svm_margin.min(separator.distance_to(m, x)?);
    }
    Ok(Equivalence {
        angle,
        margin_gap: (seg_margin - svm_margin).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::Sphere;

    #[test]
    fn single_pair() {
        let s = hard_margin_svm(&[Vec2::new(0.0, 1.0)], &[Vec2::new(0.0, -1.0)]).unwrap();
        assert!((s.normal - Vec2::new(0.0, 1.0)).norm() < 1e-15);
        assert_eq!(s.offset, 0.0);
        assert_eq!(s.margin, 1.0);
    }

    #[test]
    fn translation_shifts_offset_only() {
        let a = [
            Vec2::new(0.0, 1.0),
            Vec2::new(1.0, 1.5),
            Vec2::new(-1.0, 2.0),
        ];
        let b = [
            Vec2::new(0.0, -1.0),
            Vec2::new(2.0, -0.5),
            Vec2::new(-1.0, -1.2),
        ];
        let s = hard_margin_svm(&a, &b).unwrap();
        let t = Vec2::new(3.0, -2.0);
        let shift = |p: &[Vec2]| p.iter().map(|x| x + t).collect::<Vec<_>>();
        let u = hard_margin_svm(&shift(&a), &shift(&b)).unwrap();
        assert!((s.normal - u.normal).norm() < 1e-12);
        assert!((u.offset - s.offset - s.normal.dot(&t)).abs() < 1e-12);
        assert!((u.margin - s.margin).abs() < 1e-12);
    }

    #[test]
    fn overlapping_sets_are_inseparable() {
        let a = [Vec2::new(-1.0, 0.0), Vec2::new(1.0, 0.0)];
        let b = [Vec2::new(0.0, -1.0), Vec2::new(0.0, 1.0)];
        assert_eq!(
            hard_margin_svm(&a, &b).unwrap_err().name(),
            "InseparableError"
        );
        // one hull strictly inside the other
        let big = [
            Vec2::new(-5.0, -5.0),
            Vec2::new(5.0, -5.0),
            Vec2::new(0.0, 5.0),
        ];
        let small = [Vec2::new(0.0, 0.0), Vec2::new(0.1, 0.1)];
        assert!(hard_margin_svm(&big, &small).is_err());
    }

    #[test]
    fn singleton_neighborhoods_give_the_bisector() {
        let p1 = ManifoldPoint::new(1.0, 0.0, 0.2);
        let p2 = ManifoldPoint::new(1.0, 0.1, -0.2);
        let config = LocalConfiguration {
            points1: vec![p1],
            points2: vec![p2],
        };
        let base = Sphere.geodesic_point(&p1, &p2, 0.5).unwrap();
        let sep = separator_for(&Sphere, &config, &base).unwrap();
        assert!(sep.offset.abs() < 1e-12);
        let d = Sphere.distance(&p1, &p2);
        assert!((sep.margin - 0.5 * d).abs() < 1e-12);
        assert!((sep.distance_to(&Sphere, &p1).unwrap() - 0.5 * d).abs() < 1e-12);
        assert!((sep.distance_to(&Sphere, &p2).unwrap() - 0.5 * d).abs() < 1e-12);
        let toward = Sphere.log(&base, &p1).unwrap();
        assert!(toward.dot(&sep.normal) > 0.0);
    }

    #[test]
    fn identical_geodesics_are_equivalent() {
        let p1 = ManifoldPoint::new(1.0, 0.0, 0.1);
        let p2 = ManifoldPoint::new(1.0, 0.0, -0.1);
        let config = LocalConfiguration {
            points1: vec![p1],
            points2: vec![p2],
        };
        let base = ManifoldPoint::new(1.0, 0.0, 0.0);
        let sep = separator_for(&Sphere, &config, &base).unwrap();
        let along = sep.geodesic(&Sphere, 0.05, 4).unwrap();
        let e = equivalence_metrics(&Sphere, &along, &sep, &config).unwrap();
        assert!(e.angle < 1e-7 && e.margin_gap < 1e-12, "{e:?}");
        let across = Curve::new(
            &Sphere,
            vec![
                ManifoldPoint::new(1.0, 0.0, -0.05),
                ManifoldPoint::new(1.0, 0.0, 0.05),
            ],
        )
        .unwrap();
        let e = equivalence_metrics(&Sphere, &across, &sep, &config).unwrap();
        assert!((e.angle - std::f64::consts::FRAC_PI_2).abs() < 1e-9);
    }
}
