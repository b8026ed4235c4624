use geoflow::manifold::{exp_map, log_map, parallel_transport_exact, parallel_transport_schild};
use geoflow::{Curve, Manifold, ManifoldPoint, Sphere, TangentVector, Vec3};
use proptest::prelude::*;
use std::f64::consts::FRAC_PI_2;

fn unit() -> impl Strategy<Value = ManifoldPoint> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
        .prop_filter("away from the origin", |(x, y, z)| {
            x * x + y * y + z * z > 0.01
        })
        .prop_map(|(x, y, z)| ManifoldPoint::new(x, y, z))
}

fn tangent_at(x: ManifoldPoint, raw: (f64, f64, f64), len: f64) -> TangentVector {
    let w = Vec3::new(raw.0, raw.1, raw.2);
    let w = w - x.coords() * x.coords().dot(&w);
    match w.try_normalize(1e-6) {
        Some(u) => TangentVector::new(x, u * len),
        None => TangentVector::zero(x),
    }
}

fn raw3() -> impl Strategy<Value = (f64, f64, f64)> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
}

proptest! {
    #[test]
    fn log_inverts_exp(x in unit(), raw in raw3(), len in 0.0f64..FRAC_PI_2) {
        let m = Sphere;
        let v = tangent_at(x, raw, len);
        let y = exp_map(&m, &x, &v).unwrap();
        let back = log_map(&m, &x, &y).unwrap();
        prop_assert!((back.vec() - v.vec()).norm() <= 1e-10);
    }

    #[test]
    fn exp_stays_on_sphere(x in unit(), raw in raw3(), len in 0.0f64..3.0) {
        let m = Sphere;
        let y = exp_map(&m, &x, &tangent_at(x, raw, len)).unwrap();
        prop_assert!((y.coords().norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn distance_is_a_metric(a in unit(), b in unit(), c in unit()) {
        let m = Sphere;
        let (ab, ba) = (m.distance(&a, &b), m.distance(&b, &a));
        prop_assert!((ab - ba).abs() < 1e-14);
        prop_assert!(ab >= 0.0);
        prop_assert!(m.distance(&a, &c) <= ab + m.distance(&b, &c) + 1e-12);
    }

    #[test]
    fn distance_matches_arccos(a in unit(), b in unit()) {
        let oracle = a.coords().dot(b.coords()).clamp(-1.0, 1.0).acos();
        prop_assert!((Sphere.distance(&a, &b) - oracle).abs() < 1e-7);
    }

    #[test]
    fn transport_is_isometric(x in unit(), y in unit(), raw in raw3(), len in 0.0f64..2.0) {
        let m = Sphere;
        prop_assume!(x.dot(&y) > -0.99);
        let v = tangent_at(x, raw, len);
        let moved = m.transport(&v, &y).unwrap();
        prop_assert!((moved.norm() - v.norm()).abs() < 1e-12);
        prop_assert!(moved.vec().dot(y.coords()).abs() < 1e-12);
        let exact = parallel_transport_exact(&m, &v, &x, &y).unwrap();
        prop_assert!((exact.norm() - v.norm()).abs() < 1e-12);
    }
}

/// Closed form on the equator: transport along it keeps the vector's
/// components against the local east and north axes.
#[test]
fn schild_ladder_converges_at_second_order() {
    let m = Sphere;
    let start = ManifoldPoint::new(1.0, 0.0, 0.0);
    let v = TangentVector::new(start, Vec3::new(0.0, 0.6, 0.8));
    let end_lon = FRAC_PI_2 * 0.9;
    let end = ManifoldPoint::new(end_lon.cos(), end_lon.sin(), 0.0);
    let oracle = Vec3::new(-end_lon.sin(), end_lon.cos(), 0.0) * 0.6 + Vec3::z() * 0.8;
    let path = Curve::new(
        &m,
        (0..100)
            .map(|i| {
                let a = end_lon * i as f64 / 99.0;
                ManifoldPoint::new(a.cos(), a.sin(), 0.0)
            })
            .collect(),
    )
    .unwrap();
    assert!((path.last().coords() - end.coords()).norm() < 1e-12);
    let err = |rung: f64| {
        let t = parallel_transport_schild(&m, &v, &path, rung).unwrap();
        (t.vec() - oracle).norm()
    };
    let (coarse, fine) = (err(0.2), err(0.1));
    assert!(fine <= coarse, "{coarse} then {fine}");
    assert!(err(0.016) <= 1e-4);
}
