//! Neighborhoods, kernel-weighted local covariance, and tangent-plane PCA.

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::manifold::{Manifold, ManifoldPoint, TangentVector, Vec3};

/// Relative eigen-gap below which the top two eigenvalues count as equal.
pub const TOL_EIG: f64 = 1e-6;

/// Samples within geodesic distance `radius` of `center`, with normalized kernel weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhood {
    pub center: ManifoldPoint,
    pub radius: f64,
    pub members: Vec<usize>,
    pub weights: Vec<f64>,
}

impl Neighborhood {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Truncated Gaussian kernel `K(d/h)`, `K(u) = exp(-u²/2)` on `u <= 1`, zero beyond.
pub fn kernel_weight(d: f64, h: f64) -> f64 {
    let u = d / h;
    if u <= 1.0 {
        (-0.5 * u * u).exp()
    } else {
        0.0
    }
}

/// Indices of cloud points within distance `h` of `center`, in cloud order.
pub fn members_within<M: Manifold>(
    m: &M,
    cloud: &[ManifoldPoint],
    center: &ManifoldPoint,
    h: f64,
) -> Vec<usize> {
    // chord-length prefilter: d <= h  <=>  |x - c| <= 2 sin(h/2)
    let chord = if h >= std::f64::consts::PI {
        f64::INFINITY
    } else {
        2.0 * (0.5 * h).sin() * (1.0 + 1e-12)
    };
    let chord2 = chord * chord;
    cloud
        .iter()
        .enumerate()
        .filter(|(_, x)| {
            (x.coords() - center.coords()).norm_squared() <= chord2 && m.distance(x, center) <= h
        })
        .map(|(i, _)| i)
        .collect()
}

pub fn find_neighborhood<M: Manifold>(
    m: &M,
    cloud: &[ManifoldPoint],
    center: &ManifoldPoint,
    h: f64,
) -> Result<Neighborhood> {
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "locality h must be positive, got {h}"
        )));
    }
    let members = members_within(m, cloud, center, h);
    if members.is_empty() {
        return Err(Error::EmptyNeighborhood { radius: h });
    }
    let mut weights: Vec<f64> = members
        .iter()
        .map(|&i| kernel_weight(m.distance(&cloud[i], center), h))
        .collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(Neighborhood {
        center: *center,
        radius: h,
        members,
        weights,
    })
}

/// Kernel-weighted second moment of the logs at `center` plus their weighted mean.
fn weighted_moments<M: Manifold>(
    m: &M,
    cloud: &[ManifoldPoint],
    nb: &Neighborhood,
) -> Result<(Matrix3<f64>, Vec3)> {
    let mut sigma = Matrix3::zeros();
    let mut mean = Vec3::zeros();
    for (&i, &w) in nb.members.iter().zip(&nb.weights) {
        let l = *m.log(&nb.center, &cloud[i])?.vec();
        sigma += l * l.transpose() * w;
        mean += l * w;
    }
    Ok((sigma, mean))
}

/// The local covariance `Σ_h(center)` of the logs of nearby samples.
pub fn local_covariance<M: Manifold>(
    m: &M,
    cloud: &[ManifoldPoint],
    center: &ManifoldPoint,
    h: f64,
) -> Result<Matrix3<f64>> {
    let nb = find_neighborhood(m, cloud, center, h)?;
    Ok(weighted_moments(m, cloud, &nb)?.0)
}

/// Top two eigenpairs of a local covariance restricted to a tangent plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalSpectrum {
    pub lambda1: f64,
    pub lambda2: f64,
    pub e1: TangentVector,
    pub e2: TangentVector,
    pub mean_log: TangentVector,
}

/// Eigen-decomposition of `sigma` in the tangent plane at `base`.
///
/// `e1` is oriented to have a nonnegative inner product with `reference`
/// when one is given; otherwise its largest-magnitude coordinate is made
/// positive. `e2 = base × e1`. `mean_log` is left at zero; see [`local_pca`].
pub fn tangent_pca<M: Manifold>(
    m: &M,
    sigma: &Matrix3<f64>,
    base: &ManifoldPoint,
    reference: Option<&Vec3>,
) -> Result<LocalSpectrum> {
    let (t1, t2) = m.tangent_basis(base);
    let a = (sigma * t1).dot(&t1);
    let c = (sigma * t2).dot(&t2);
    let b = 0.5 * ((sigma * t2).dot(&t1) + (sigma * t1).dot(&t2));
    let half_mean = 0.5 * (a + c);
    let half_gap = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let lambda1 = (half_mean + half_gap).max(0.0);
    let lambda2 = (half_mean - half_gap).max(0.0);
    if lambda1 - lambda2 <= TOL_EIG * lambda1 || lambda1 == 0.0 {
        return Err(Error::DegenerateSpectrum {
            lambda1,
            lambda2,
            index: None,
        });
    }
    // eigenvector of [[a, b], [b, c]] for lambda1, from the better-conditioned row
    let (u, v) = if a >= c {
        (lambda1 - c, b)
    } else {
        (b, lambda1 - a)
    };
    let mut e1 = (t1 * u + t2 * v).normalize();
    let flip = match reference {
        Some(r) => e1.dot(r) < 0.0,
        None => {
            let k = e1.iamax();
            e1[k] < 0.0
        }
    };
    if flip {
        e1 = -e1;
    }
    let e2 = base.coords().cross(&e1);
    Ok(LocalSpectrum {
        lambda1,
        lambda2,
        e1: TangentVector::new(*base, e1),
        e2: TangentVector::new(*base, e2),
        mean_log: TangentVector::zero(*base),
    })
}

/// Local PCA at `center`: covariance, spectrum, and the weighted mean log.
pub fn local_pca<M: Manifold>(
    m: &M,
    cloud: &[ManifoldPoint],
    center: &ManifoldPoint,
    h: f64,
    reference: Option<&Vec3>,
) -> Result<LocalSpectrum> {
    let nb = find_neighborhood(m, cloud, center, h)?;
    let (sigma, mean) = weighted_moments(m, cloud, &nb)?;
    let mut spectrum = tangent_pca(m, &sigma, center, reference)?;
    spectrum.mean_log = TangentVector::new(*center, mean);
    Ok(spectrum)
}

/// Spread ratio `σ = (λ₂/λ₁)·h`.
pub fn local_spread(spectrum: &LocalSpectrum, h: f64) -> Result<f64> {
    if !(spectrum.lambda1 > 0.0) {
        return Err(Error::DegenerateSpectrum {
            lambda1: spectrum.lambda1,
            lambda2: spectrum.lambda2,
            index: None,
        });
    }
    Ok(spectrum.lambda2 / spectrum.lambda1 * h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::Sphere;
    use std::f64::consts::PI;

    fn north() -> ManifoldPoint {
        ManifoldPoint::new(0.0, 0.0, 1.0)
    }

    #[test]
    fn kernel_examples() {
        assert_eq!(kernel_weight(0.0, 0.2), 1.0);
        assert_eq!(kernel_weight(0.21, 0.2), 0.0);
        let grid: Vec<f64> = (0..=300)
            .map(|i| kernel_weight(i as f64 * 1e-3, 0.2))
            .collect();
        assert!(grid.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn singleton_neighborhood() {
        let nb = find_neighborhood(&Sphere, &[north()], &north(), 0.1).unwrap();
        assert_eq!(nb.members, vec![0]);
        assert_eq!(nb.weights, vec![1.0]);
    }

    #[test]
    fn empty_neighborhood_is_an_error() {
        let far = ManifoldPoint::new(1.0, 0.0, 0.0);
        let err = find_neighborhood(&Sphere, &[far], &north(), 0.1).unwrap_err();
        assert_eq!(err.name(), "EmptyNeighborhoodError");
    }

    #[test]
    fn radius_pi_takes_everything_reachable() {
        let cloud = vec![
            ManifoldPoint::new(1.0, 0.0, 0.0),
            ManifoldPoint::new(0.0, 1.0, -0.5),
            ManifoldPoint::new(0.1, 0.0, -1.0),
        ];
        let nb = find_neighborhood(&Sphere, &cloud, &north(), PI).unwrap();
        assert_eq!(nb.members, vec![0, 1, 2]);
        assert!((nb.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn covariance_of_coincident_points_is_zero() {
        let s = local_covariance(&Sphere, &[north(), north()], &north(), 0.1).unwrap();
        assert_eq!(s, Matrix3::zeros());
        assert!(tangent_pca(&Sphere, &s, &north(), None).is_err());
    }

    #[test]
    fn pca_diagonal_and_isotropic() {
        let sigma = Matrix3::from_diagonal(&Vec3::new(4.0, 1.0, 0.0));
        let s = tangent_pca(&Sphere, &sigma, &north(), None).unwrap();
        assert!((s.lambda1 - 4.0).abs() < 1e-14 && (s.lambda2 - 1.0).abs() < 1e-14);
        assert!((s.e1.vec() - Vec3::x()).norm() < 1e-14);
        assert!((s.e2.vec() - Vec3::y()).norm() < 1e-14);
        let iso = Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, 0.0));
        let err = tangent_pca(&Sphere, &iso, &north(), None).unwrap_err();
        assert_eq!(err.name(), "DegenerateSpectrumError");
    }

    #[test]
    fn pca_respects_reference_sign() {
        let sigma = Matrix3::from_diagonal(&Vec3::new(4.0, 1.0, 0.0));
        let r = Vec3::new(-1.0, 0.2, 0.0);
        let s = tangent_pca(&Sphere, &sigma, &north(), Some(&r)).unwrap();
        assert!(s.e1.vec().dot(&r) >= 0.0);
        assert!((s.e1.vec() + Vec3::x()).norm() < 1e-14);
    }

    #[test]
    fn spread_examples() {
        let sigma = Matrix3::from_diagonal(&Vec3::new(4.0, 1.0, 0.0));
        let s = tangent_pca(&Sphere, &sigma, &north(), None).unwrap();
        assert!((local_spread(&s, 0.2).unwrap() - 0.05).abs() < 1e-15);
        let rank_one = Matrix3::from_diagonal(&Vec3::new(4.0, 0.0, 0.0));
        let s = tangent_pca(&Sphere, &rank_one, &north(), None).unwrap();
        assert_eq!(local_spread(&s, 0.2).unwrap(), 0.0);
    }
}
