//! Points, tangent vectors, and the [`Manifold`] interface.
//!
//! Everything downstream talks to geometry through [`Manifold`]; the unit
//! sphere in [`Sphere`] is the only implementation shipped. Points are stored
//! as embedded unit 3-vectors and tangent vectors as ambient 3-vectors
//! orthogonal to their base point.

use std::f64::consts::PI;

use nalgebra::{Rotation3, Vector3};

use crate::curve::Curve;
use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Inner products at or below `-1 + ANTIPODAL_EPS` are treated as antipodal.
pub const ANTIPODAL_EPS: f64 = 1e-9;

/// Default maximum rung length for Schild's ladder, in radians.
pub const DEFAULT_RUNG: f64 = 0.01;

/// A point of the unit sphere, stored by its ambient coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManifoldPoint(Vec3);

impl ManifoldPoint {
    /// Builds a point from ambient coordinates, renormalizing to unit length.
    ///
    /// Panics on the zero vector; use [`ManifoldPoint::try_from_vector`] for
    /// untrusted input.
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self::try_from_vector(Vec3::new(x, y, z)).expect("zero vector is not a sphere point")
    }

    pub fn try_from_vector(v: Vec3) -> Result<Self> {
        let n = v.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "cannot normalize vector of norm {n}"
            )));
        }
        Ok(ManifoldPoint(v / n))
    }

    pub(crate) fn from_vector_unchecked(v: Vec3) -> Self {
        ManifoldPoint(v / v.norm())
    }

    /// Longitude/latitude in degrees, `x = (cos φ cos λ, cos φ sin λ, sin φ)`.
    pub fn from_lonlat_deg(lon: f64, lat: f64) -> Self {
        let (lon, lat) = (lon.to_radians(), lat.to_radians());
        ManifoldPoint::from_vector_unchecked(Vec3::new(
            lat.cos() * lon.cos(),
            lat.cos() * lon.sin(),
            lat.sin(),
        ))
    }

    /// Inverse of [`ManifoldPoint::from_lonlat_deg`]; longitude in `(-180, 180]`.
    pub fn to_lonlat_deg(&self) -> (f64, f64) {
        let v = self.0;
        let lon = v.y.atan2(v.x).to_degrees();
        let lat = v.z.atan2((v.x * v.x + v.y * v.y).sqrt()).to_degrees();
        (lon, lat)
    }

    pub fn coords(&self) -> &Vec3 {
        &self.0
    }

    pub fn dot(&self, other: &ManifoldPoint) -> f64 {
        self.0.dot(&other.0)
    }

    pub fn rotated(&self, r: &Rotation3<f64>) -> Self {
        ManifoldPoint::from_vector_unchecked(r * self.0)
    }
}

/// A vector in the tangent plane at `base`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentVector {
    base: ManifoldPoint,
    vec: Vec3,
}

impl TangentVector {
    /// Tangent vector at `base`; the normal component of `w` is removed.
    pub fn new(base: ManifoldPoint, w: Vec3) -> Self {
        let x = base.0;
        TangentVector {
            base,
            vec: w - x * w.dot(&x),
        }
    }

    pub fn zero(base: ManifoldPoint) -> Self {
        TangentVector {
            base,
            vec: Vec3::zeros(),
        }
    }

    pub fn base(&self) -> &ManifoldPoint {
        &self.base
    }

    pub fn vec(&self) -> &Vec3 {
        &self.vec
    }

    pub fn norm(&self) -> f64 {
        self.vec.norm()
    }

    pub fn dot(&self, other: &TangentVector) -> f64 {
        self.vec.dot(&other.vec)
    }

    pub fn scaled(&self, s: f64) -> Self {
        TangentVector {
            base: self.base,
            vec: self.vec * s,
        }
    }

    /// Unit vector in the same direction, or `None` for a (numerically) zero vector.
    pub fn normalized(&self) -> Option<Self> {
        let n = self.norm();
        (n > 1e-300).then(|| self.scaled(1.0 / n))
    }

    /// Flips the vector if it points away from `reference`.
    pub fn aligned_with(&self, reference: &Vec3) -> Self {
        if self.vec.dot(reference) < 0.0 {
            self.scaled(-1.0)
        } else {
            *self
        }
    }

    /// Sum of two vectors at the same base.
    pub fn add(&self, other: &TangentVector) -> Self {
        TangentVector {
            base: self.base,
            vec: self.vec + other.vec,
        }
    }

    pub fn rotated(&self, r: &Rotation3<f64>) -> Self {
        TangentVector::new(self.base.rotated(r), r * self.vec)
    }
}

/// Geometry interface used by every algorithm in the crate.
pub trait Manifold: Send + Sync {
    fn exp(&self, v: &TangentVector) -> Result<ManifoldPoint>;

    fn log(&self, x: &ManifoldPoint, y: &ManifoldPoint) -> Result<TangentVector>;

    fn distance(&self, x: &ManifoldPoint, y: &ManifoldPoint) -> f64;

    fn project_to_tangent(&self, x: &ManifoldPoint, w: &Vec3) -> TangentVector {
        TangentVector::new(*x, *w)
    }

    /// Parallel transport of `v` along the minimizing geodesic to `y`.
    fn transport(&self, v: &TangentVector, y: &ManifoldPoint) -> Result<TangentVector>;

    /// Orthonormal basis of the tangent plane at `x`.
    fn tangent_basis(&self, x: &ManifoldPoint) -> (Vec3, Vec3);

    /// `exp_x(s · log_x(y))`; `s` outside `[0, 1]` extrapolates along the geodesic.
    fn geodesic_point(
        &self,
        x: &ManifoldPoint,
        y: &ManifoldPoint,
        s: f64,
    ) -> Result<ManifoldPoint> {
        if s == 0.0 {
            return Ok(*x);
        }
        if s == 1.0 {
            return Ok(*y);
        }
        let v = self.log(x, y)?;
        self.exp(&v.scaled(s))
    }
}

/// The unit 2-sphere embedded in R³.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sphere;

impl Manifold for Sphere {
    fn exp(&self, v: &TangentVector) -> Result<ManifoldPoint> {
        let n = v.norm();
        if n >= PI {
            return Err(Error::CutLocus {
                context: "exp of a vector with norm >= pi",
            });
        }
        if n == 0.0 {
            return Ok(v.base);
        }
        let x = v.base.0;
        Ok(ManifoldPoint::from_vector_unchecked(
            x * n.cos() + v.vec * (n.sin() / n),
        ))
    }

    fn log(&self, x: &ManifoldPoint, y: &ManifoldPoint) -> Result<TangentVector> {
        let c = x.dot(y);
        if c <= -1.0 + ANTIPODAL_EPS {
            return Err(Error::CutLocus {
                context: "log of antipodal points",
            });
        }
        let s = x.0.cross(&y.0).norm();
        let theta = s.atan2(c);
        let dir = y.0 - x.0 * c;
        let dn = dir.norm();
        if theta == 0.0 || dn == 0.0 {
            return Ok(TangentVector::zero(*x));
        }
        Ok(TangentVector::new(*x, dir * (theta / dn)))
    }

    fn distance(&self, x: &ManifoldPoint, y: &ManifoldPoint) -> f64 {
        // atan2 form of arccos(clamp(<x, y>, -1, 1)); accurate near 0 and pi.
        x.0.cross(&y.0).norm().atan2(x.dot(y))
    }

    fn transport(&self, v: &TangentVector, y: &ManifoldPoint) -> Result<TangentVector> {
        let x = v.base;
        let log = self.log(&x, y)?;
        let theta = log.norm();
        if theta == 0.0 {
            return Ok(TangentVector::new(*y, v.vec));
        }
        let u = log.vec / theta;
        let a = v.vec.dot(&u);
        let moved = v.vec + (u * (theta.cos() - 1.0) - x.0 * theta.sin()) * a;
        Ok(TangentVector::new(*y, moved))
    }

    fn tangent_basis(&self, x: &ManifoldPoint) -> (Vec3, Vec3) {
        let p = x.0;
        let axis = if p.x.abs() <= p.y.abs() && p.x.abs() <= p.z.abs() {
            Vec3::x()
        } else if p.y.abs() <= p.z.abs() {
            Vec3::y()
        } else {
            Vec3::z()
        };
        let e1 = p.cross(&axis).normalize();
        let e2 = p.cross(&e1);
        (e1, e2)
    }
}

/// A minimizing geodesic arc between two non-antipodal points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeodesicSegment {
    pub start: ManifoldPoint,
    pub end: ManifoldPoint,
    pub length: f64,
}

impl GeodesicSegment {
    pub fn new<M: Manifold>(m: &M, start: ManifoldPoint, end: ManifoldPoint) -> Result<Self> {
        if start.dot(&end) <= -1.0 + ANTIPODAL_EPS {
            return Err(Error::CutLocus {
                context: "geodesic segment between antipodal points",
            });
        }
        Ok(GeodesicSegment {
            start,
            end,
            length: m.distance(&start, &end),
        })
    }

    pub fn point_at<M: Manifold>(&self, m: &M, s: f64) -> Result<ManifoldPoint> {
        m.geodesic_point(&self.start, &self.end, s)
    }
}

pub fn exp_map<M: Manifold>(m: &M, x: &ManifoldPoint, v: &TangentVector) -> Result<ManifoldPoint> {
    debug_assert!(
        v.base.0.metric_distance(&x.0) < 1e-9,
        "tangent vector based elsewhere"
    );
    m.exp(v)
}

pub fn log_map<M: Manifold>(m: &M, x: &ManifoldPoint, y: &ManifoldPoint) -> Result<TangentVector> {
    m.log(x, y)
}

pub fn geodesic_distance<M: Manifold>(m: &M, x: &ManifoldPoint, y: &ManifoldPoint) -> f64 {
    m.distance(x, y)
}

pub fn geodesic_point<M: Manifold>(
    m: &M,
    x: &ManifoldPoint,
    y: &ManifoldPoint,
    s: f64,
) -> Result<ManifoldPoint> {
    m.geodesic_point(x, y, s)
}

pub fn project_to_tangent<M: Manifold>(m: &M, x: &ManifoldPoint, w: &Vec3) -> TangentVector {
    m.project_to_tangent(x, w)
}

/// Closed-form transport of `v` (based at `x`) along the geodesic to `y`.
pub fn parallel_transport_exact<M: Manifold>(
    m: &M,
    v: &TangentVector,
    x: &ManifoldPoint,
    y: &ManifoldPoint,
) -> Result<TangentVector> {
    debug_assert!(v.base.0.metric_distance(&x.0) < 1e-9);
    m.transport(v, y)
}

/// Parallel transport along `path` by Schild's ladder.
///
/// Each path segment is split into equal rungs no longer than `max_rung`.
/// On every rung `a -> b` the vector (scaled to the rung length) is shot from
/// `a`, the midpoint between its tip and `b` is found, and the geodesic from
/// `a` through that midpoint is doubled; the log at `b` of the far corner is
/// the transported direction, renormalized after each rung.
///
/// A plain ladder drifts by a fixed amount per rung and so is only first
/// order in the rung spacing. The ladder is therefore climbed twice, at the
/// requested spacing and at half of it, and the two results are combined by
/// Richardson extrapolation, which cancels the first-order term.
pub fn parallel_transport_schild<M: Manifold>(
    m: &M,
    v: &TangentVector,
    path: &Curve,
    max_rung: f64,
) -> Result<TangentVector> {
    if !(max_rung > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "max_rung must be positive, got {max_rung}"
        )));
    }
    let norm = v.norm();
    let Some(dir) = v.normalized() else {
        return Ok(TangentVector::zero(*path.last()));
    };
    if path.len() < 2 {
        return Ok(*v);
    }
    let coarse = climb_ladder(m, dir, path, max_rung, 1)?;
    let fine = climb_ladder(m, dir, path, max_rung, 2)?;
    let end = *path.last();
    let extrapolated = TangentVector::new(end, fine.vec() * 2.0 - coarse.vec());
    Ok(extrapolated.normalized().unwrap_or(fine).scaled(norm))
}

fn climb_ladder<M: Manifold>(
    m: &M,
    mut dir: TangentVector,
    path: &Curve,
    max_rung: f64,
    split: usize,
) -> Result<TangentVector> {
    for pair in path.nodes().windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let seg = m.distance(&a, &b);
        let rungs = (seg / max_rung).ceil().max(1.0) as usize * split;
        let mut from = a;
        for r in 1..=rungs {
            let to = if r == rungs {
                b
            } else {
                m.geodesic_point(&a, &b, r as f64 / rungs as f64)?
            };
            dir = schild_rung(m, &dir, &from, &to)?;
            from = to;
        }
    }
    Ok(dir)
}

fn schild_rung<M: Manifold>(
    m: &M,
    dir: &TangentVector,
    from: &ManifoldPoint,
    to: &ManifoldPoint,
) -> Result<TangentVector> {
    let len = m.distance(from, to);
    if len == 0.0 {
        return Ok(*dir);
    }
    let tip = m.exp(&dir.scaled(len))?;
    let mid = m.geodesic_point(&tip, to, 0.5)?;
    let far = m.geodesic_point(from, &mid, 2.0)?;
    let w = m.log(to, &far)?;
    w.normalized().ok_or(Error::CutLocus {
        context: "Schild rung collapsed",
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn north() -> ManifoldPoint {
        ManifoldPoint::new(0.0, 0.0, 1.0)
    }

    #[test]
    fn exp_quarter_circle() {
        let v = TangentVector::new(north(), Vec3::new(FRAC_PI_2, 0.0, 0.0));
        let y = Sphere.exp(&v).unwrap();
        assert!((y.coords() - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn exp_zero_and_eighth() {
        let z = Sphere.exp(&TangentVector::zero(north())).unwrap();
        assert_eq!(z, north());
        let v = TangentVector::new(north(), Vec3::new(PI / 4.0, 0.0, 0.0));
        let y = Sphere.exp(&v).unwrap();
        let h = 2f64.sqrt() / 2.0;
        assert!((y.coords() - Vec3::new(h, 0.0, h)).norm() < 1e-15);
    }

    #[test]
    fn exp_rejects_cut_locus() {
        let v = TangentVector::new(north(), Vec3::new(PI, 0.0, 0.0));
        assert!(matches!(Sphere.exp(&v), Err(Error::CutLocus { .. })));
    }

    #[test]
    fn log_examples() {
        let v = Sphere
            .log(&north(), &ManifoldPoint::new(1.0, 0.0, 0.0))
            .unwrap();
        assert!((v.vec() - Vec3::new(FRAC_PI_2, 0.0, 0.0)).norm() < 1e-15);
        let z = Sphere.log(&north(), &north()).unwrap();
        assert_eq!(z.norm(), 0.0);
        let south = ManifoldPoint::new(0.0, 0.0, -1.0);
        assert!(matches!(
            Sphere.log(&north(), &south),
            Err(Error::CutLocus { .. })
        ));
    }

    #[test]
    fn distance_examples() {
        let d = Sphere.distance(&north(), &ManifoldPoint::new(1.0, 0.0, 0.0));
        assert!((d - FRAC_PI_2).abs() < 1e-15);
        assert_eq!(Sphere.distance(&north(), &north()), 0.0);
        let south = ManifoldPoint::new(0.0, 0.0, -1.0);
        assert!((Sphere.distance(&north(), &south) - PI).abs() < 1e-15);
    }

    #[test]
    fn geodesic_point_examples() {
        let e = ManifoldPoint::new(1.0, 0.0, 0.0);
        let mid = Sphere.geodesic_point(&north(), &e, 0.5).unwrap();
        let h = 2f64.sqrt() / 2.0;
        assert!((mid.coords() - Vec3::new(h, 0.0, h)).norm() < 1e-15);
        assert_eq!(Sphere.geodesic_point(&north(), &e, 0.0).unwrap(), north());
    }

    #[test]
    fn project_examples() {
        let t = project_to_tangent(&Sphere, &north(), &Vec3::new(1.0, 0.0, 1.0));
        assert_eq!(*t.vec(), Vec3::new(1.0, 0.0, 0.0));
        let w = Vec3::new(0.3, -0.2, 0.0);
        assert_eq!(*project_to_tangent(&Sphere, &north(), &w).vec(), w);
    }

    #[test]
    fn transport_fixes_plane_normal() {
        let x = ManifoldPoint::new(1.0, 0.0, 0.0);
        let y = ManifoldPoint::new(0.0, 1.0, 0.0);
        let v = TangentVector::new(x, Vec3::z());
        let t = parallel_transport_exact(&Sphere, &v, &x, &y).unwrap();
        assert!((t.vec() - Vec3::z()).norm() < 1e-15);
    }

    #[test]
    fn transport_carries_geodesic_velocity() {
        let x = ManifoldPoint::new(1.0, 0.0, 0.0);
        let y = ManifoldPoint::new(0.0, 1.0, 0.0);
        let v = Sphere.log(&x, &y).unwrap();
        let t = Sphere.transport(&v, &y).unwrap();
        // velocity at the end of the geodesic from x to y
        let expected = Vec3::new(-FRAC_PI_2, 0.0, 0.0);
        assert!((t.vec() - expected).norm() < 1e-14);
    }

    #[test]
    fn schild_single_node_is_identity() {
        let x = ManifoldPoint::new(1.0, 0.0, 0.0);
        let path = Curve::single(x);
        let v = TangentVector::new(x, Vec3::new(0.0, 0.3, 0.4));
        let t = parallel_transport_schild(&Sphere, &v, &path, DEFAULT_RUNG).unwrap();
        assert_eq!(t, v);
    }

    #[test]
    fn tangent_basis_is_orthonormal() {
        for p in [
            north(),
            ManifoldPoint::new(0.3, -0.8, 0.1),
            ManifoldPoint::new(1.0, 1e-9, 0.0),
        ] {
            let (a, b) = Sphere.tangent_basis(&p);
            assert!(a.dot(p.coords()).abs() < 1e-15);
            assert!(b.dot(p.coords()).abs() < 1e-15);
            assert!(a.dot(&b).abs() < 1e-15);
            assert!((a.norm() - 1.0).abs() < 1e-15 && (b.norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn lonlat_axes() {
        let p = ManifoldPoint::from_lonlat_deg(0.0, 0.0);
        assert!((p.coords() - Vec3::x()).norm() < 1e-15);
        let q = ManifoldPoint::from_lonlat_deg(0.0, 90.0);
        assert!((q.coords() - Vec3::z()).norm() < 1e-15);
    }
}
