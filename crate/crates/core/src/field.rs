//! Eigen vector fields over a point cloud and the softmax-modified field.
//!
//! [`build_eigen_field`] attaches the leading local principal direction to
//! every sample, orienting signs consistently across overlapping
//! neighborhoods. [`build_modified_field`] replaces each sample's vector by a
//! softmax-weighted blend of the principal directions of every neighborhood
//! that contains it. [`field_at`] evaluates the blended field anywhere.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::flow::frechet_mean;
use crate::local::{local_pca, members_within};
use crate::manifold::{Manifold, ManifoldPoint, TangentVector, Vec3};
use crate::par;

/// Convergence tolerance used for the neighborhood means `c_i`.
const LOCAL_MEAN_TOL: f64 = 1e-10;

/// Per-sample vectors of the modified field plus the pieces used to build them.
#[derive(Debug, Clone)]
pub struct SampleField {
    pub cloud: Vec<ManifoldPoint>,
    /// `v(x_j)`, based at `cloud[j]`.
    pub per_sample_vectors: Vec<TangentVector>,
    pub locality_h: f64,
    /// `c_i`, the Fréchet mean of the neighborhood of sample `i`.
    pub local_means: Vec<ManifoldPoint>,
    /// `v_i`, the oriented leading eigenvector at sample `i`.
    pub local_principals: Vec<TangentVector>,
    /// `I_j`: indices of the neighborhoods containing sample `j`.
    pub memberships: Vec<Vec<usize>>,
    /// Softmax weights `w_ij`, aligned with `memberships[j]`.
    pub weights: Vec<Vec<f64>>,
}

fn neighbor_lists<M: Manifold>(m: &M, cloud: &[ManifoldPoint], h: f64) -> Vec<Vec<usize>> {
    par::map_slice(cloud, |x| members_within(m, cloud, x, h))
}

fn raw_principals<M: Manifold>(
    m: &M,
    cloud: &[ManifoldPoint],
    h: f64,
) -> Result<Vec<TangentVector>> {
    par::map_range(cloud.len(), |j| {
        local_pca(m, cloud, &cloud[j], h, None)
            .map(|s| s.e1)
            .map_err(|e| e.with_index(j))
    })
    .into_iter()
    .collect()
}

/// Orients each vector against the transported vectors of its already
/// oriented neighbors, visiting samples breadth-first.
fn orient<M: Manifold>(
    m: &M,
    vectors: &mut [TangentVector],
    neighbors: &[Vec<usize>],
) -> Result<()> {
    let n = vectors.len();
    let mut done = vec![false; n];
    let mut queue = VecDeque::new();
    for root in 0..n {
        if done[root] {
            continue;
        }
        done[root] = true;
        queue.push_back(root);
        while let Some(j) = queue.pop_front() {
            for &k in &neighbors[j] {
                if done[k] {
                    continue;
                }
                let base = *vectors[k].base();
                let mut consensus = Vec3::zeros();
                for &i in &neighbors[k] {
                    if done[i] {
                        consensus += m.transport(&vectors[i], &base)?.vec();
                    }
                }
                vectors[k] = vectors[k].aligned_with(&consensus);
                done[k] = true;
                queue.push_back(k);
            }
        }
    }
    Ok(())
}

/// Leading local eigenvector at every sample, sign-aligned with its neighbors.
pub fn build_eigen_field<M: Manifold>(
    m: &M,
    cloud: &[ManifoldPoint],
    h: f64,
) -> Result<Vec<TangentVector>> {
    check_h(h)?;
    let neighbors = neighbor_lists(m, cloud, h);
    let mut vectors = raw_principals(m, cloud, h)?;
    orient(m, &mut vectors, &neighbors)?;
    Ok(vectors)
}

/// Softmax weights `exp(-d(x, c_i)) / Σ exp(-d(x, c_i))`.
pub fn softmax_weights<M: Manifold>(m: &M, x: &ManifoldPoint, means: &[ManifoldPoint]) -> Vec<f64> {
    let d: Vec<f64> = means.iter().map(|c| m.distance(x, c)).collect();
    // shift by the minimum distance; the ratio is unchanged
    let dmin = d.iter().copied().fold(f64::INFINITY, f64::min);
    let e: Vec<f64> = d.iter().map(|di| (-(di - dmin)).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|w| w / total).collect()
}

/// `v(x) = proj_x(Σ_i w_i v_i)` for the given principals and their neighborhood means.
pub fn modified_vector<M: Manifold>(
    m: &M,
    x: &ManifoldPoint,
    principals: &[TangentVector],
    means: &[ManifoldPoint],
) -> (TangentVector, Vec<f64>) {
    let w = softmax_weights(m, x, means);
    let sum = principals
        .iter()
        .zip(&w)
        .fold(Vec3::zeros(), |acc, (v, wi)| acc + v.vec() * *wi);
    (m.project_to_tangent(x, &sum), w)
}

pub fn build_modified_field<M: Manifold>(
    m: &M,
    cloud: &[ManifoldPoint],
    h: f64,
) -> Result<SampleField> {
    check_h(h)?;
    let neighbors = neighbor_lists(m, cloud, h);
    let mut principals = raw_principals(m, cloud, h)?;
    orient(m, &mut principals, &neighbors)?;

    let means: Vec<ManifoldPoint> = par::map_range(cloud.len(), |i| {
        let members: Vec<ManifoldPoint> = neighbors[i].iter().map(|&k| cloud[k]).collect();
        frechet_mean(m, &members, LOCAL_MEAN_TOL)
    })
    .into_iter()
    .collect::<Result<_>>()?;

    // x_j lies in N(x_i, h) exactly when x_i lies in N(x_j, h)
    let blended = par::map_range(cloud.len(), |j| {
        let idx = &neighbors[j];
        let v: Vec<TangentVector> = idx.iter().map(|&i| principals[i]).collect();
        let c: Vec<ManifoldPoint> = idx.iter().map(|&i| means[i]).collect();
        modified_vector(m, &cloud[j], &v, &c)
    });
    let (per_sample_vectors, weights) = blended.into_iter().unzip();

    Ok(SampleField {
        cloud: cloud.to_vec(),
        per_sample_vectors,
        locality_h: h,
        local_means: means,
        local_principals: principals,
        memberships: neighbors,
        weights,
    })
}

/// Unit field direction at `q`: the sum of the per-sample vectors within the
/// locality radius, each transported to `q` and flipped toward `reference`
/// (or toward the first contribution when no reference is given).
pub fn field_at<M: Manifold>(
    m: &M,
    q: &ManifoldPoint,
    field: &SampleField,
    reference: Option<&TangentVector>,
) -> Result<TangentVector> {
    let members = members_within(m, &field.cloud, q, field.locality_h);
    if members.is_empty() {
        return Err(Error::EmptyNeighborhood {
            radius: field.locality_h,
        });
    }
    let mut reference = match reference {
        Some(r) if r.base() != q => Some(*m.transport(r, q)?.vec()),
        Some(r) => Some(*r.vec()),
        None => None,
    };
    let mut sum = Vec3::zeros();
    for j in members {
        let t = m.transport(&field.per_sample_vectors[j], q)?;
        let r = *reference.get_or_insert(*t.vec());
        sum += t.aligned_with(&r).vec();
    }
    m.project_to_tangent(q, &sum)
        .normalized()
        .ok_or(Error::DegenerateSpectrum {
            lambda1: 0.0,
            lambda2: 0.0,
            index: None,
        })
}

fn check_h(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "locality h must be positive, got {h}"
        )))
    }
}
