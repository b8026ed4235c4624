//! Curve projection, soft margins, and the principal-boundary tracer.
//!
//! The tracer starts from an equal-margin point found on a geodesic between
//! the two flows, then repeatedly steps along a convex combination
//! `λ ṽ₁ + (1-λ) ṽ₂` of the flow directions transported to the current
//! point, tuning `λ` until the two soft margins agree again.

use crate::curve::{geodesic_curve, Curve};
use crate::error::{Error, Result};
use crate::flow::FlowResult;
use crate::manifold::{
    parallel_transport_schild, Manifold, ManifoldPoint, TangentVector, Vec3, DEFAULT_RUNG,
};
use crate::par;

/// Two refined local minima closer than this count as a tie.
pub const TOL_PROJ: f64 = 1e-6;

/// Fraction of a segment within which a projection counts as sitting on a node.
const END_TOL: f64 = 1e-9;

const GOLDEN_ITERS: usize = 60;
const BISECT_ITERS: usize = 200;

/// Below this gap between the transported flow directions, λ has no effect.
const LAMBDA_FREE_TOL: f64 = 1e-6;
/// Largest multiple of `delta` tried by the stalled-step fallback.
const STALL_WIDENINGS: usize = 4;

/// Nearest point of a curve to a query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionResult {
    pub point: ManifoldPoint,
    /// Segment index; the point lies between nodes `node_index` and `node_index + 1`.
    pub node_index: usize,
    /// Position within the segment, in `[0, 1]`.
    pub arc_parameter: f64,
    pub distance: f64,
    /// Arc length of `point` along the curve.
    pub arc_length: f64,
}

impl ProjectionResult {
    /// Whether the projection sits on the first or last node of `curve`.
    pub fn is_endpoint(&self, curve: &Curve) -> bool {
        let n = curve.len();
        n < 2
            || (self.node_index == 0 && self.arc_parameter <= END_TOL)
            || (self.node_index == n - 2 && self.arc_parameter >= 1.0 - END_TOL)
    }
}

/// Minimizes `d(q, ·)` over segment `k` by golden-section search.
fn refine_segment<M: Manifold>(
    m: &M,
    q: &ManifoldPoint,
    curve: &Curve,
    k: usize,
    d0: f64,
    d1: f64,
) -> Result<(f64, f64)> {
    let nodes = curve.nodes();
    let (a, b) = (nodes[k], nodes[k + 1]);
    let eval = |s: f64| -> Result<f64> { Ok(m.distance(q, &m.geodesic_point(&a, &b, s)?)) };
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = eval(x1)?;
    let mut f2 = eval(x2)?;
    for _ in 0..GOLDEN_ITERS {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = eval(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = eval(x2)?;
        }
    }
    let (mut best_s, mut best_d) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    if d0 <= best_d {
        best_s = 0.0;
        best_d = d0;
    }
    if d1 < best_d {
        best_s = 1.0;
        best_d = d1;
    }
    Ok((best_s, best_d))
}

/// Refined `(segment, s, distance)` for every segment that could hold the
/// minimum distance from `q`.
fn candidate_minima<M: Manifold>(
    m: &M,
    q: &ManifoldPoint,
    curve: &Curve,
) -> Result<Vec<(usize, f64, f64)>> {
    let nodes = curve.nodes();
    let d: Vec<f64> = nodes.iter().map(|p| m.distance(q, p)).collect();
    if nodes.len() == 1 {
        return Ok(vec![(0, 0.0, d[0])]);
    }
    let cum = curve.cumulative_length();
    let mut best = d.iter().copied().fold(f64::INFINITY, f64::min);
    // per-segment lower bound: d(q, p) >= (d_k + d_{k+1} - len_k) / 2 on segment k
    let mut order: Vec<(f64, usize)> = (0..nodes.len() - 1)
        .map(|k| (0.5 * (d[k] + d[k + 1] - (cum[k + 1] - cum[k])), k))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut refined = Vec::new();
    for &(bound, k) in &order {
        if bound > best + TOL_PROJ {
            break;
        }
        let (s, dist) = refine_segment(m, q, curve, k, d[k], d[k + 1])?;
        best = best.min(dist);
        refined.push((k, s, dist));
    }
    Ok(refined)
}

/// Geodesic distance from `q` to the nearest point of `curve`, ties allowed.
pub fn distance_to_curve<M: Manifold>(m: &M, q: &ManifoldPoint, curve: &Curve) -> Result<f64> {
    Ok(candidate_minima(m, q, curve)?
        .iter()
        .map(|c| c.2)
        .fold(f64::INFINITY, f64::min))
}

/// Symmetric Hausdorff distance between two polylines.
pub fn hausdorff<M: Manifold>(m: &M, a: &Curve, b: &Curve) -> Result<f64> {
    let one_way = |x: &Curve, y: &Curve| -> Result<f64> {
        par::map_slice(x.nodes(), |p| distance_to_curve(m, p, y))
            .into_iter()
            .try_fold(0.0f64, |acc, d| Ok(acc.max(d?)))
    };
    Ok(one_way(a, b)?.max(one_way(b, a)?))
}

/// Projection of `q` onto `curve`: node scan, then golden-section refinement on
/// every segment that could hold the minimum.
///
/// Fails with [`Error::AmbiguousProjection`] when two minima on non-adjacent
/// segments agree within [`TOL_PROJ`].
pub fn project_to_curve<M: Manifold>(
    m: &M,
    q: &ManifoldPoint,
    curve: &Curve,
) -> Result<ProjectionResult> {
    let refined = candidate_minima(m, q, curve)?;
    let &(k, s, dist) = refined
        .iter()
        .min_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)))
        .expect("at least one segment is refined");
    if curve.len() == 1 {
        return Ok(ProjectionResult {
            point: *curve.first(),
            node_index: 0,
            arc_parameter: 0.0,
            distance: dist,
            arc_length: 0.0,
        });
    }
    // position along the curve measured in segment units, for adjacency tests
    let here = k as f64 + s;
    let at = curve.arc_length_at(k, s);
    for &(k2, s2, d2) in &refined {
        let there = k2 as f64 + s2;
        if (d2 - dist).abs() > TOL_PROJ || (there - here).abs() <= 1.0 + END_TOL {
            continue;
        }
        // one flat basin unless a rise separates the two or it is wider than a
        // tolerance-level set around a smooth minimum
        let (lo, hi) = (here.min(there), here.max(there));
        let nodes = curve.nodes();
        let barrier = (lo.floor() as usize + 1..=hi.ceil() as usize - 1)
            .filter(|&j| (j as f64) > lo && (j as f64) < hi)
            .any(|j| m.distance(q, &nodes[j]) > dist + TOL_PROJ);
        if barrier || (curve.arc_length_at(k2, s2) - at).abs() > TOL_PROJ.sqrt() {
            let (first, second) = if k < k2 { (k, k2) } else { (k2, k) };
            return Err(Error::AmbiguousProjection { first, second });
        }
    }
    let point = curve.point_on_segment(m, k, s)?;
    Ok(ProjectionResult {
        point,
        node_index: k,
        arc_parameter: s,
        distance: dist,
        arc_length: curve.arc_length_at(k, s),
    })
}

/// Soft margin of `q` with the projection and interpolated spread it used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginDetail {
    pub projection: ProjectionResult,
    pub spread: f64,
    pub margin: f64,
}

pub fn margin_detail<M: Manifold>(
    m: &M,
    q: &ManifoldPoint,
    flow: &FlowResult,
) -> Result<MarginDetail> {
    let projection = project_to_curve(m, q, &flow.curve)?;
    let spread = flow.curve.interpolate(
        &flow.node_spread,
        projection.node_index,
        projection.arc_parameter,
    );
    Ok(MarginDetail {
        projection,
        spread,
        margin: projection.distance - spread,
    })
}

/// Soft margin `d(q, γ) - σ_γ(p_γ(q))`; negative inside the spread tube.
pub fn margin<M: Manifold>(m: &M, q: &ManifoldPoint, flow: &FlowResult) -> Result<f64> {
    Ok(margin_detail(m, q, flow)?.margin)
}

/// Flow direction at a projection point, blended between the bracketing nodes.
pub fn flow_direction_at<M: Manifold>(
    m: &M,
    flow: &FlowResult,
    proj: &ProjectionResult,
) -> Result<TangentVector> {
    let k = proj.node_index;
    let s = proj.arc_parameter;
    let dirs = &flow.node_direction;
    if flow.len() == 1 {
        return Ok(dirs[0]);
    }
    let a = m.transport(&dirs[k], &proj.point)?;
    let b = m.transport(&dirs[k + 1], &proj.point)?;
    let blend = a.scaled(1.0 - s).add(&b.scaled(s));
    Ok(blend.normalized().unwrap_or(a))
}

/// Tracer settings.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryParams {
    /// Step length along the boundary.
    pub delta: f64,
    /// Initial λ adjustment.
    pub eps: f64,
    /// Equal-margin tolerance; `None` means `1e-6·(h₁+h₂)/2`, floored at `1e-8`.
    pub tol_margin: Option<f64>,
    pub max_inner_iters: usize,
    /// Length cap for each direction of the trace.
    pub max_length: f64,
    /// Rung length for Schild's ladder.
    pub rung: f64,
    /// When no λ in `[0, 1]` rebalances the margins, search the forward
    /// half-circle of radius `delta` around the current point for the
    /// equal-margin direction instead of failing.
    pub correct_on_stall: bool,
}

impl Default for BoundaryParams {
    fn default() -> Self {
        BoundaryParams {
            delta: 0.01,
            eps: 0.05,
            tol_margin: None,
            max_inner_iters: 100,
            max_length: std::f64::consts::PI,
            rung: DEFAULT_RUNG,
            correct_on_stall: true,
        }
    }
}

impl BoundaryParams {
    pub fn tol_for(&self, h1: f64, h2: f64) -> f64 {
        self.tol_margin
            .unwrap_or_else(|| (1e-6 * 0.5 * (h1 + h2)).max(1e-8))
    }
}

/// One accepted point of the boundary and everything the next step needs.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryState {
    pub q: ManifoldPoint,
    pub lambda: f64,
    pub p1: ProjectionResult,
    pub p2: ProjectionResult,
    /// Direction of travel at `q`.
    pub prev_direction: TangentVector,
    /// Arc length travelled from the initial point.
    pub t: f64,
    pub margin1: f64,
    pub margin2: f64,
    /// Whether the point came from the geodesic re-solve rather than λ tuning.
    pub corrected: bool,
    /// Distance from `q` to the geodesic between `p1` and `p2`.
    pub geodesic_gap: f64,
}

impl BoundaryState {
    pub fn residual(&self) -> f64 {
        self.margin1 - self.margin2
    }

    pub fn margin(&self) -> f64 {
        self.margin1.min(self.margin2)
    }
}

struct Balance {
    q: ManifoldPoint,
    m1: MarginDetail,
    m2: MarginDetail,
}

impl Balance {
    fn residual(&self) -> f64 {
        self.m1.margin - self.m2.margin
    }
}

fn balance_at<M: Manifold>(
    m: &M,
    q: ManifoldPoint,
    f1: &FlowResult,
    f2: &FlowResult,
) -> Result<Balance> {
    Ok(Balance {
        q,
        m1: margin_detail(m, &q, f1)?,
        m2: margin_detail(m, &q, f2)?,
    })
}

/// Bisection for `m₁ = m₂` on the geodesic from `a` to `b`.
fn solve_on_geodesic<M: Manifold>(
    m: &M,
    a: &ManifoldPoint,
    b: &ManifoldPoint,
    f1: &FlowResult,
    f2: &FlowResult,
    tol: f64,
) -> Result<Balance> {
    let at = |s: f64| -> Result<Balance> { balance_at(m, m.geodesic_point(a, b, s)?, f1, f2) };
    let mut lo = at(0.0)?;
    let mut hi = at(1.0)?;
    let (r_lo, r_hi) = (lo.residual(), hi.residual());
    // the flows touch: there is no geodesic to search along
    if m.distance(a, b) < 1e-12
        || r_lo.signum() == r_hi.signum() && r_lo.abs().min(r_hi.abs()) > tol
    {
        return Err(Error::Separation {
            at_start: r_lo,
            at_end: r_hi,
        });
    }
    // bisect well past the acceptance tolerance so later steps inherit a tight start
    let target = 1e-3 * tol;
    let (mut s_lo, mut s_hi) = (0.0, 1.0);
    let mut iters = 0;
    while lo.residual().abs() > target
        && hi.residual().abs() > target
        && iters < BISECT_ITERS
        && s_hi - s_lo > 1e-16
    {
        iters += 1;
        let s = 0.5 * (s_lo + s_hi);
        let mid = at(s)?;
        if mid.residual().signum() == lo.residual().signum() {
            s_lo = s;
            lo = mid;
        } else {
            s_hi = s;
            hi = mid;
        }
    }
    let best = if lo.residual().abs() <= hi.residual().abs() {
        lo
    } else {
        hi
    };
    if best.residual().abs() <= tol {
        Ok(best)
    } else {
        Err(Error::NonConvergence {
            what: "equal-margin bisection",
            iterations: iters,
            residual: best.residual().abs(),
        })
    }
}

/// Equal-margin point at distance `delta` from `q`, searched over directions
/// within a right angle of `forward`, preferring the one closest to `forward`.
fn solve_on_circle<M: Manifold>(
    m: &M,
    q: &ManifoldPoint,
    forward: &TangentVector,
    f1: &FlowResult,
    f2: &FlowResult,
    delta: f64,
    tol: f64,
) -> Result<(Balance, TangentVector)> {
    const SAMPLES: usize = 32;
    let fwd = forward
        .normalized()
        .ok_or(Error::InvalidParameter("zero step direction".into()))?;
    let side = TangentVector::new(*q, q.coords().cross(fwd.vec()));
    let dir_at = |theta: f64| fwd.scaled(theta.cos()).add(&side.scaled(theta.sin()));
    let at = |theta: f64| -> Result<Balance> {
        balance_at(m, m.exp(&dir_at(theta).scaled(delta))?, f1, f2)
    };
    let half = 0.5 * std::f64::consts::PI;
    let thetas: Vec<f64> = (0..=SAMPLES)
        .map(|i| -half + std::f64::consts::PI * i as f64 / SAMPLES as f64)
        .collect();
    let residuals = thetas
        .iter()
        .map(|&t| at(t).map(|b| b.residual()))
        .collect::<Result<Vec<_>>>()?;
    // sign changes, nearest to straight ahead first
    let mut brackets: Vec<usize> = (0..SAMPLES)
        .filter(|&i| residuals[i].signum() != residuals[i + 1].signum() || residuals[i] == 0.0)
        .collect();
    brackets.sort_by(|&a, &b| {
        let mid = |i: usize| (0.5 * (thetas[i] + thetas[i + 1])).abs();
        mid(a).total_cmp(&mid(b))
    });
    let mut best_seen = residuals.iter().fold(f64::INFINITY, |a, r| a.min(r.abs()));
    // A bracket can straddle a jump where the projection switches branch;
    // such a bracket never converges, so fall through to the next one.
    for &i in &brackets {
        let (mut lo, mut hi) = (thetas[i], thetas[i + 1]);
        let mut r_lo = residuals[i];
        let mut best = at(lo)?;
        for _ in 0..BISECT_ITERS {
            if best.residual().abs() <= 1e-3 * tol || hi - lo < 1e-15 {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let b = match at(mid) {
                Ok(b) => b,
                // Landed on the seam between two projection branches.
                Err(Error::AmbiguousProjection { .. }) => break,
                Err(e) => return Err(e),
            };
            if b.residual().signum() == r_lo.signum() {
                lo = mid;
                r_lo = b.residual();
            } else {
                hi = mid;
            }
            if b.residual().abs() < best.residual().abs() {
                best = b;
            }
        }
        if best.residual().abs() <= tol {
            let dir = m.log(q, &best.q)?.normalized().unwrap_or(fwd);
            return Ok((best, dir));
        }
        best_seen = best_seen.min(best.residual().abs());
    }
    Err(Error::NonConvergence {
        what: "boundary step",
        iterations: BISECT_ITERS,
        residual: best_seen,
    })
}

/// Transports the flow direction at a projection point to `q` by Schild's ladder.
fn transported_direction<M: Manifold>(
    m: &M,
    flow: &FlowResult,
    proj: &ProjectionResult,
    q: &ManifoldPoint,
    rung: f64,
) -> Result<TangentVector> {
    let dir = flow_direction_at(m, flow, proj)?;
    let path = geodesic_curve(m, &proj.point, q, 1)?;
    let moved = parallel_transport_schild(m, &dir, &path, rung)?;
    // the ladder ends at `q` only up to rounding; re-project
    Ok(TangentVector::new(*q, *moved.vec()))
}

fn geodesic_gap<M: Manifold>(
    m: &M,
    q: &ManifoldPoint,
    a: &ManifoldPoint,
    b: &ManifoldPoint,
) -> Result<f64> {
    let chord = geodesic_curve(m, a, b, 1)?;
    Ok(project_to_curve(m, q, &chord)?.distance)
}

fn make_state<M: Manifold>(
    m: &M,
    bal: &Balance,
    lambda: f64,
    prev_direction: TangentVector,
    t: f64,
    corrected: bool,
) -> Result<BoundaryState> {
    Ok(BoundaryState {
        q: bal.q,
        lambda,
        p1: bal.m1.projection,
        p2: bal.m2.projection,
        prev_direction,
        t,
        margin1: bal.m1.margin,
        margin2: bal.m2.margin,
        corrected,
        geodesic_gap: geodesic_gap(
            m,
            &bal.q,
            &bal.m1.projection.point,
            &bal.m2.projection.point,
        )?,
    })
}

fn check_flows(f1: &FlowResult, f2: &FlowResult) -> Result<()> {
    if f1.len() < 2 || f2.len() < 2 {
        return Err(Error::InvalidCurve(
            "boundary tracing needs flows with at least two nodes".into(),
        ));
    }
    if curves_cross(&f1.curve, &f2.curve) {
        return Err(Error::Separation {
            at_start: 0.0,
            at_end: 0.0,
        });
    }
    Ok(())
}

/// Whether the minor great-circle arcs `ab` and `cd` share a point.
fn arcs_cross(a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3) -> bool {
    let n1 = a.cross(b);
    let n2 = c.cross(d);
    let on_arc = |p: &Vec3, s: &Vec3, e: &Vec3, n: &Vec3| {
        s.cross(p).dot(n) >= -1e-15 && p.cross(e).dot(n) >= -1e-15 && p.dot(&(s + e)) > 0.0
    };
    let axis = n1.cross(&n2);
    if axis.norm() < 1e-14 {
        // same great circle: overlap when an endpoint of one arc lies on the other
        let same_circle = c.dot(&n1.normalize()).abs() < 1e-12;
        return same_circle
            && (on_arc(c, a, b, &n1)
                || on_arc(d, a, b, &n1)
                || on_arc(a, c, d, &n2)
                || on_arc(b, c, d, &n2));
    }
    let p = axis.normalize();
    [p, -p]
        .iter()
        .any(|p| on_arc(p, a, b, &n1) && on_arc(p, c, d, &n2))
}

/// Whether two polylines on the sphere intersect.
pub fn curves_cross(c1: &Curve, c2: &Curve) -> bool {
    let bbox_reject = |a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3| {
        // chord midpoints farther apart than the half-chords can reach
        let (m1, m2) = (0.5 * (a + b), 0.5 * (c + d));
        (m1 - m2).norm() > 0.5 * ((a - b).norm() + (c - d).norm()) + 1e-12
    };
    c1.nodes().windows(2).any(|s| {
        let (a, b) = (s[0].coords(), s[1].coords());
        c2.nodes().windows(2).any(|t| {
            let (c, d) = (t[0].coords(), t[1].coords());
            !bbox_reject(a, b, c, d) && arcs_cross(a, b, c, d)
        })
    })
}

/// Warm start and initial point.
///
/// A seed `c` on flow 2 (its mid-arc node by default) is projected onto flow
/// 1; the equal-margin point on that connecting geodesic is the warm start
/// `q₀`. Its projection onto flow 2 completes the matching pair, and the
/// equal-margin point on the geodesic between the pair is `q(0)`, with
/// `λ = 1/2`.
pub fn init_boundary<M: Manifold>(
    m: &M,
    flow1: &FlowResult,
    flow2: &FlowResult,
    seed: Option<ManifoldPoint>,
    params: &BoundaryParams,
) -> Result<BoundaryState> {
    check_flows(flow1, flow2)?;
    let tol = params.tol_for(flow1.locality_h, flow2.locality_h);
    let c = match seed {
        Some(c) => c,
        None => {
            let cum = flow2.curve.cumulative_length();
            let half = 0.5 * flow2.curve.length();
            let k = (0..cum.len())
                .min_by(|&a, &b| (cum[a] - half).abs().total_cmp(&(cum[b] - half).abs()))
                .unwrap();
            flow2.curve.nodes()[k]
        }
    };
    let p0 = project_to_curve(m, &c, &flow1.curve)?.point;
    let warm = solve_on_geodesic(m, &p0, &c, flow1, flow2, tol)?;
    let p2 = warm.m2.projection.point;
    let start = solve_on_geodesic(m, &p0, &p2, flow1, flow2, tol)?;

    let v1 = transported_direction(m, flow1, &start.m1.projection, &start.q, params.rung)?;
    let v2 = transported_direction(m, flow2, &start.m2.projection, &start.q, params.rung)?;
    let v2 = v2.aligned_with(v1.vec());
    let dir = v1.scaled(0.5).add(&v2.scaled(0.5));
    let dir = dir.normalized().unwrap_or(v1);
    make_state(m, &start, 0.5, dir, 0.0, false)
}

struct Candidate {
    lambda: f64,
    direction: TangentVector,
    bal: Balance,
}

/// One tracer step of length `delta` from `state`.
///
/// `λ` starts at the least-squares fit of the previous direction by
/// `λ ṽ₁ + (1-λ) ṽ₂`. While the margins at the stepped point disagree, `λ`
/// moves by `±eps` toward balance (`+` when `m₁ < m₂`); `eps` halves whenever
/// the residual changes sign, and the move direction reverses when a move
/// makes the residual larger without crossing zero.
pub fn step_boundary<M: Manifold>(
    m: &M,
    state: &BoundaryState,
    flow1: &FlowResult,
    flow2: &FlowResult,
    params: &BoundaryParams,
) -> Result<BoundaryState> {
    let (h1, h2) = (flow1.locality_h, flow2.locality_h);
    if !(params.delta > 0.0 && params.delta <= 0.5 * h1.min(h2) + 1e-15) {
        return Err(Error::InvalidParameter(format!(
            "delta {} must lie in (0, min(h1, h2)/2]",
            params.delta
        )));
    }
    let tol = params.tol_for(h1, h2);
    let q = state.q;
    let prev = *state.prev_direction.vec();
    let v1 = transported_direction(m, flow1, &state.p1, &q, params.rung)?.aligned_with(&prev);
    let v2 = transported_direction(m, flow2, &state.p2, &q, params.rung)?.aligned_with(&prev);
    let diff = v1.vec() - v2.vec();
    // with ṽ₁ = ṽ₂ the step direction does not depend on λ
    let lambda_free = diff.norm() < LAMBDA_FREE_TOL;
    let lambda0 = if !lambda_free {
        ((prev - v2.vec()).dot(&diff) / diff.norm_squared()).clamp(0.0, 1.0)
    } else {
        state.lambda
    };

    let eval = |lambda: f64| -> Result<Candidate> {
        let mix = v1.scaled(lambda).add(&v2.scaled(1.0 - lambda));
        let direction = mix.normalized().unwrap_or(state.prev_direction);
        let next = m.exp(&direction.scaled(params.delta))?;
        Ok(Candidate {
            lambda,
            direction,
            bal: balance_at(m, next, flow1, flow2)?,
        })
    };

    let mut cand = eval(lambda0)?;
    let mut best_lambda = cand.lambda;
    let mut best_abs = cand.bal.residual().abs();
    let mut orientation = 1.0;
    let mut eps = params.eps;
    let mut pinned = 0;
    let mut iters = 0;
    while !lambda_free && cand.bal.residual().abs() > tol && iters < params.max_inner_iters {
        iters += 1;
        let r = cand.bal.residual();
        let toward = if r < 0.0 { 1.0 } else { -1.0 } * orientation;
        let lambda = (cand.lambda + toward * eps).clamp(0.0, 1.0);
        if lambda == cand.lambda {
            // pinned at 0 or 1: balance needs a direction outside the cone
            pinned += 1;
            orientation = -orientation;
            if pinned >= 2 {
                break;
            }
            continue;
        }
        let next = eval(lambda)?;
        let rn = next.bal.residual();
        if rn.signum() != r.signum() {
            eps *= 0.5;
        } else if rn.abs() > r.abs() {
            orientation = -orientation;
        }
        if rn.abs() < best_abs {
            best_abs = rn.abs();
            best_lambda = lambda;
        }
        cand = next;
    }

    let (bal, lambda, direction, corrected) = if cand.bal.residual().abs() <= tol {
        (cand.bal, cand.lambda, cand.direction, false)
    } else if params.correct_on_stall {
        // Widen the circle when the margin difference jumps across it.
        let mut found = solve_on_circle(
            m,
            &q,
            &state.prev_direction,
            flow1,
            flow2,
            params.delta,
            tol,
        );
        for scale in 2..=STALL_WIDENINGS {
            if !matches!(
                found,
                Err(Error::NonConvergence { .. } | Error::AmbiguousProjection { .. })
            ) {
                break;
            }
            found = solve_on_circle(
                m,
                &q,
                &state.prev_direction,
                flow1,
                flow2,
                scale as f64 * params.delta,
                tol,
            );
        }
        let (bal, dir) = found?;
        (bal, best_lambda, dir, true)
    } else {
        return Err(Error::NonConvergence {
            what: "boundary step",
            iterations: params.max_inner_iters,
            residual: best_abs,
        });
    };

    if bal.m1.projection.is_endpoint(&flow1.curve) {
        return Err(Error::EndOfFlow { flow: 1 });
    }
    if bal.m2.projection.is_endpoint(&flow2.curve) {
        return Err(Error::EndOfFlow { flow: 2 });
    }
    let moved = m.transport(&direction, &bal.q)?;
    let travelled = m.distance(&q, &bal.q);
    make_state(m, &bal, lambda, moved, state.t + travelled, corrected)
}

/// A traced boundary with per-node diagnostics.
#[derive(Debug, Clone)]
pub struct BoundaryResult {
    pub curve: Curve,
    /// `min(m₁, m₂)` at each node.
    pub per_node_margin: Vec<f64>,
    pub per_node_lambda: Vec<f64>,
    /// `m₁ - m₂` at each node.
    pub per_node_residual: Vec<f64>,
    /// Projections `(p₁, p₂)` of each node onto the two flows.
    pub matches: Vec<(ManifoldPoint, ManifoldPoint)>,
    pub per_node_corrected: Vec<bool>,
    pub per_node_geodesic_gap: Vec<f64>,
    /// Index of `q(0)` within the node list.
    pub start_index: usize,
}

/// A tracing error together with whatever was traced before it.
#[derive(Debug, Clone, thiserror::Error)]
#[error("{error}")]
pub struct TraceFailure {
    pub error: Error,
    pub partial: Option<BoundaryResult>,
}

fn walk<M: Manifold>(
    m: &M,
    start: BoundaryState,
    flow1: &FlowResult,
    flow2: &FlowResult,
    params: &BoundaryParams,
) -> (Vec<BoundaryState>, Option<Error>) {
    let mut states = vec![start];
    let max_steps = (params.max_length / params.delta).floor() as usize + 1;
    for _ in 0..max_steps {
        let cur = states.last().unwrap();
        if cur.t + params.delta > params.max_length + 1e-12 {
            break;
        }
        match step_boundary(m, cur, flow1, flow2, params) {
            Ok(s) => states.push(s),
            Err(Error::EndOfFlow { .. }) => break,
            Err(e) => return (states, Some(e)),
        }
    }
    (states, None)
}

fn assemble<M: Manifold>(
    m: &M,
    backward: &[BoundaryState],
    forward: &[BoundaryState],
) -> Result<BoundaryResult> {
    let states: Vec<&BoundaryState> = backward
        .iter()
        .skip(1)
        .rev()
        .chain(forward.iter())
        .collect();
    let curve = Curve::new_dedup(m, states.iter().map(|s| s.q).collect())?;
    if curve.len() != states.len() {
        return Err(Error::InvalidCurve("boundary revisited a node".into()));
    }
    Ok(BoundaryResult {
        curve,
        per_node_margin: states.iter().map(|s| s.margin()).collect(),
        per_node_lambda: states.iter().map(|s| s.lambda).collect(),
        per_node_residual: states.iter().map(|s| s.residual()).collect(),
        matches: states.iter().map(|s| (s.p1.point, s.p2.point)).collect(),
        per_node_corrected: states.iter().map(|s| s.corrected).collect(),
        per_node_geodesic_gap: states.iter().map(|s| s.geodesic_gap).collect(),
        start_index: backward.len() - 1,
    })
}

/// Traces the boundary in both directions from `q(0)` until either projection
/// reaches the end of its flow or `max_length` is covered on each side.
pub fn trace_boundary<M: Manifold>(
    m: &M,
    flow1: &FlowResult,
    flow2: &FlowResult,
    seed: Option<ManifoldPoint>,
    params: &BoundaryParams,
) -> std::result::Result<BoundaryResult, TraceFailure> {
    let fail = |error: Error, partial: Option<BoundaryResult>| TraceFailure { error, partial };
    let start = init_boundary(m, flow1, flow2, seed, params).map_err(|e| fail(e, None))?;
    let mut reverse = start;
    reverse.prev_direction = start.prev_direction.scaled(-1.0);
    let ((fwd, fwd_err), (bwd, bwd_err)) = crate::par::join(
        || walk(m, start, flow1, flow2, params),
        || walk(m, reverse, flow1, flow2, params),
    );
    let result = assemble(m, &bwd, &fwd).map_err(|e| fail(e, None))?;
    match fwd_err.or(bwd_err) {
        Some(e) => Err(fail(e, Some(result))),
        None => Ok(result),
    }
}

/// Sum of geodesic distances between consecutive boundary nodes.
pub fn boundary_length<M: Manifold>(m: &M, result: &BoundaryResult) -> f64 {
    result
        .curve
        .nodes()
        .windows(2)
        .map(|w| m.distance(&w[0], &w[1]))
        .sum()
}
