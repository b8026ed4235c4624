//! Fréchet means, flow tracing, and the two-sided principal flow.

use std::f64::consts::FRAC_PI_2;

use crate::curve::Curve;
use crate::error::{Error, Result};
use crate::field::{build_modified_field, field_at, SampleField};
use crate::local::{find_neighborhood, local_covariance, members_within, tangent_pca};
use crate::manifold::{Manifold, ManifoldPoint, TangentVector, Vec3};
use crate::par;

pub const FRECHET_TOL: f64 = 1e-10;
pub const FRECHET_MAX_ITER: usize = 200;

/// Intrinsic (Karcher) mean by fixed-point iteration `x <- exp_x(mean log_x(x_i))`.
pub fn frechet_mean<M: Manifold>(
    m: &M,
    cloud: &[ManifoldPoint],
    tol: f64,
) -> Result<ManifoldPoint> {
    frechet_mean_with(m, cloud, tol, FRECHET_MAX_ITER)
}

pub fn frechet_mean_with<M: Manifold>(
    m: &M,
    cloud: &[ManifoldPoint],
    tol: f64,
    max_iter: usize,
) -> Result<ManifoldPoint> {
    if cloud.is_empty() {
        return Err(Error::InvalidParameter(
            "Fréchet mean of an empty cloud".into(),
        ));
    }
    let extrinsic: Vec3 = cloud.iter().map(|p| p.coords()).sum();
    let mut x = ManifoldPoint::try_from_vector(extrinsic)
        .map_err(|_| Error::Hemisphere { norm: f64::NAN })?;
    let w = 1.0 / cloud.len() as f64;
    let mut last = f64::INFINITY;
    for _ in 0..max_iter {
        let mut g = Vec3::zeros();
        for p in cloud {
            let l = m.log(&x, p).map_err(|_| Error::Hemisphere {
                norm: FRAC_PI_2 * 2.0,
            })?;
            g += l.vec() * w;
        }
        let norm = g.norm();
        if norm > FRAC_PI_2 {
            return Err(Error::Hemisphere { norm });
        }
        last = norm;
        if norm <= tol {
            return Ok(x);
        }
        x = m.exp(&TangentVector::new(x, g))?;
    }
    Err(Error::NonConvergence {
        what: "Fréchet mean",
        iterations: max_iter,
        residual: last,
    })
}

/// A traced flow: nodes, the local spread `σ` and the unit flow direction at each node.
#[derive(Debug, Clone)]
pub struct FlowResult {
    pub curve: Curve,
    pub node_spread: Vec<f64>,
    pub node_direction: Vec<TangentVector>,
    pub locality_h: f64,
}

impl FlowResult {
    pub fn new(
        curve: Curve,
        node_spread: Vec<f64>,
        node_direction: Vec<TangentVector>,
        locality_h: f64,
    ) -> Result<Self> {
        if node_spread.len() != curve.len() || node_direction.len() != curve.len() {
            return Err(Error::InvalidCurve(format!(
                "{} nodes but {} spreads and {} directions",
                curve.len(),
                node_spread.len(),
                node_direction.len()
            )));
        }
        Ok(FlowResult {
            curve,
            node_spread,
            node_direction,
            locality_h,
        })
    }

    /// Wraps a bare curve with a constant spread and finite-difference directions.
    pub fn from_curve<M: Manifold>(
        m: &M,
        curve: Curve,
        spread: f64,
        locality_h: f64,
    ) -> Result<Self> {
        let n = curve.len();
        if n < 2 {
            return Err(Error::InvalidCurve("flow needs at least two nodes".into()));
        }
        let nodes = curve.nodes();
        let mut dirs = Vec::with_capacity(n);
        for k in 0..n {
            let (a, b) = (nodes[k.saturating_sub(1)], nodes[(k + 1).min(n - 1)]);
            // chord direction through the neighbors, carried to node k
            let chord = m.log(&a, &b)?;
            let at = m.transport(&chord, &nodes[k])?;
            dirs.push(
                at.normalized()
                    .ok_or(Error::InvalidCurve("zero-length chord".into()))?,
            );
        }
        FlowResult::new(curve, vec![spread; n], dirs, locality_h)
    }

    pub fn len(&self) -> usize {
        self.curve.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curve.is_empty()
    }
}

/// Flow integration settings.
#[derive(Debug, Clone, Copy)]
pub struct FlowParams {
    /// Integration step; `None` means `h / 5`.
    pub step: Option<f64>,
    /// Length cap for each of the two halves of a principal flow.
    pub max_length: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            step: None,
            max_length: std::f64::consts::PI,
        }
    }
}

impl FlowParams {
    pub fn step_for(&self, h: f64) -> f64 {
        self.step.unwrap_or(h / 5.0)
    }
}

/// `σ = (λ₂/λ₁)·h` at an arbitrary point; only a vanishing `λ₁` is an error.
pub fn spread_at<M: Manifold>(
    m: &M,
    cloud: &[ManifoldPoint],
    q: &ManifoldPoint,
    h: f64,
) -> Result<f64> {
    let sigma = local_covariance(m, cloud, q, h)?;
    match tangent_pca(m, &sigma, q, None) {
        Ok(s) => Ok(s.lambda2 / s.lambda1 * h),
        // equal eigenvalues: an isotropic neighborhood spreads the full radius
        Err(Error::DegenerateSpectrum { lambda1, .. }) if lambda1 > 0.0 => Ok(h),
        Err(e) => Err(e),
    }
}

/// Follows the field from `x0` along `v0` with explicit steps
/// `q <- exp_q(step · field_at(q))` until `max_length` or the data runs out.
pub fn trace_flow<M: Manifold>(
    m: &M,
    field: &SampleField,
    x0: &ManifoldPoint,
    v0: &TangentVector,
    step: f64,
    max_length: f64,
) -> Result<FlowResult> {
    let h = field.locality_h;
    if !(step > 0.0 && step <= h / 2.0 + 1e-15) {
        return Err(Error::InvalidParameter(format!(
            "step {step} must lie in (0, h/2] with h = {h}"
        )));
    }
    if !(max_length >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "max_length must be nonnegative, got {max_length}"
        )));
    }
    let mut reference = v0
        .normalized()
        .ok_or_else(|| Error::InvalidParameter("initial direction is zero".into()))?;
    let mut nodes = vec![*x0];
    let mut dirs = Vec::new();
    let mut spreads = Vec::new();
    let mut travelled = 0.0;
    let mut q = *x0;
    loop {
        let k = nodes.len() - 1;
        let dir = match field_at(m, &q, field, Some(&reference)) {
            Ok(d) => d,
            Err(Error::EmptyNeighborhood { .. }) if k > 0 => {
                nodes.pop();
                break;
            }
            Err(e) => return Err(e.with_index(k)),
        };
        let sigma = match spread_at(m, &field.cloud, &q, h) {
            Ok(s) => s,
            Err(e) => return Err(e.with_index(k)),
        };
        dirs.push(dir);
        spreads.push(sigma.min(h));
        if travelled + step > max_length + 1e-12 {
            break;
        }
        let next = m.exp(&dir.scaled(step))?;
        reference = m.transport(&dir, &next)?;
        travelled += step;
        q = next;
        nodes.push(q);
    }
    let curve = Curve::new(m, nodes)?;
    FlowResult::new(curve, spreads, dirs, h)
}

/// Picks the default starting point: the Fréchet mean, or the sample nearest
/// to it when the mean has no data within `h`.
pub fn default_start<M: Manifold>(m: &M, cloud: &[ManifoldPoint], h: f64) -> Result<ManifoldPoint> {
    let mean = frechet_mean(m, cloud, FRECHET_TOL)?;
    if !members_within(m, cloud, &mean, h).is_empty() {
        return Ok(mean);
    }
    let nearest = cloud
        .iter()
        .min_by(|a, b| m.distance(a, &mean).total_cmp(&m.distance(b, &mean)))
        .expect("nonempty cloud");
    Ok(*nearest)
}

/// Two-sided principal flow: `γ⁻` reversed, joined at `x0` to `γ⁺`.
pub fn principal_flow<M: Manifold>(
    m: &M,
    cloud: &[ManifoldPoint],
    h: f64,
    x0: Option<ManifoldPoint>,
    params: &FlowParams,
) -> Result<FlowResult> {
    let field = build_modified_field(m, cloud, h)?;
    principal_flow_from_field(m, &field, x0, params)
}

pub fn principal_flow_from_field<M: Manifold>(
    m: &M,
    field: &SampleField,
    x0: Option<ManifoldPoint>,
    params: &FlowParams,
) -> Result<FlowResult> {
    let h = field.locality_h;
    let x0 = match x0 {
        Some(p) => p,
        None => default_start(m, &field.cloud, h)?,
    };
    find_neighborhood(m, &field.cloud, &x0, h)?;
    let v0 = field_at(m, &x0, field, None)?;
    let step = params.step_for(h);
    let (plus, minus) = par::join(
        || trace_flow(m, field, &x0, &v0, step, params.max_length),
        || trace_flow(m, field, &x0, &v0.scaled(-1.0), step, params.max_length),
    );
    join_halves(m, &minus?, &plus?)
}

/// Reverses `minus` (directions negated) and appends `plus` without its first node.
pub(crate) fn join_halves<M: Manifold>(
    m: &M,
    minus: &FlowResult,
    plus: &FlowResult,
) -> Result<FlowResult> {
    let mut nodes: Vec<ManifoldPoint> = minus.curve.nodes().iter().rev().copied().collect();
    let mut spreads: Vec<f64> = minus.node_spread.iter().rev().copied().collect();
    let mut dirs: Vec<TangentVector> = minus
        .node_direction
        .iter()
        .rev()
        .map(|d| d.scaled(-1.0))
        .collect();
    nodes.extend_from_slice(&plus.curve.nodes()[1..]);
    spreads.extend_from_slice(&plus.node_spread[1..]);
    dirs.extend_from_slice(&plus.node_direction[1..]);
    FlowResult::new(Curve::new(m, nodes)?, spreads, dirs, plus.locality_h)
}

/// Offset curves at `±σ_k` along the left normal `node × direction` of every node.
pub fn margin_curves<M: Manifold>(m: &M, flow: &FlowResult) -> Result<(Curve, Curve)> {
    let mut left = Vec::with_capacity(flow.len());
    let mut right = Vec::with_capacity(flow.len());
    for ((p, d), &s) in flow
        .curve
        .nodes()
        .iter()
        .zip(&flow.node_direction)
        .zip(&flow.node_spread)
    {
        let normal = TangentVector::new(*p, p.coords().cross(d.vec()));
        let normal = normal.normalized().unwrap_or(normal);
        left.push(m.exp(&normal.scaled(s))?);
        right.push(m.exp(&normal.scaled(-s))?);
    }
    Ok((Curve::new_dedup(m, left)?, Curve::new_dedup(m, right)?))
}
