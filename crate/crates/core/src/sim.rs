//! Sampling point clouds around population curves and Monte Carlo
//! convergence experiments for estimated flows and boundaries.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::boundary::{distance_to_curve, project_to_curve, trace_boundary, BoundaryParams};
use crate::curve::{geodesic_curve, Curve};
use crate::error::{Error, Result};
use crate::flow::{frechet_mean, FlowResult};
use crate::local::members_within;
use crate::manifold::{Manifold, ManifoldPoint, TangentVector};
use crate::par;

const MEAN_TOL: f64 = 1e-12;

/// Two tilted geodesic arcs mirrored across the equator, the default
/// population pair for convergence runs. Each arc rises from `z = 0.15` to
/// `z = 0.35` (before normalizing) over a span of 1.4 rad in longitude.
pub fn tilted_mirror_pair<M: Manifold>(m: &M, pieces: usize) -> Result<(Curve, Curve)> {
    let (c, s) = (0.7f64.cos(), 0.7f64.sin());
    let arc = |sign: f64| {
        let a = ManifoldPoint::new(c, -s, sign * 0.15);
        let b = ManifoldPoint::new(c, s, sign * 0.35);
        geodesic_curve(m, &a, &b, pieces)
    };
    Ok((arc(1.0)?, arc(-1.0)?))
}

/// Points scattered normally about a population curve.
#[derive(Debug, Clone)]
pub struct CurveDistribution {
    pub population: Curve,
    /// Standard deviation of the normal offset at each node.
    pub normal_sd: Vec<f64>,
    pub seed: u64,
    /// Independent random stream for the same seed, used to keep classes apart.
    pub stream: u64,
    /// Draw arc-length positions one per equal stratum instead of i.i.d.
    pub stratified: bool,
}

impl CurveDistribution {
    pub fn new(population: Curve, normal_sd: Vec<f64>, seed: u64) -> Result<Self> {
        if normal_sd.len() != population.len() {
            return Err(Error::LengthMismatch {
                left: normal_sd.len(),
                right: population.len(),
            });
        }
        if normal_sd.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::InvalidParameter(
                "normal sd must be finite and nonnegative".into(),
            ));
        }
        Ok(CurveDistribution {
            population,
            normal_sd,
            seed,
            stream: 0,
            stratified: false,
        })
    }

    pub fn constant(population: Curve, sd: f64, seed: u64) -> Result<Self> {
        let n = population.len();
        CurveDistribution::new(population, vec![sd; n], seed)
    }

    pub fn with_stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }

    pub fn with_stratified(mut self, stratified: bool) -> Self {
        self.stratified = stratified;
        self
    }

    fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Unit normal to the population at arc length `t` and the point there.
fn frame_at<M: Manifold>(
    m: &M,
    curve: &Curve,
    t: f64,
) -> Result<(ManifoldPoint, TangentVector, usize, f64)> {
    let (k, s) = curve.locate(t);
    let q = curve.point_on_segment(m, k, s)?;
    let tangent = curve.segment_tangent(m, k, s)?;
    let normal = TangentVector::new(q, q.coords().cross(tangent.vec()));
    Ok((q, normal, k, s))
}

/// Draws `n` points: an arc-length position, then a normal offset along the
/// curve's unit normal, mapped through the exponential map.
pub fn sample_along_curve<M: Manifold>(
    m: &M,
    dist: &CurveDistribution,
    n: usize,
) -> Result<Vec<ManifoldPoint>> {
    let curve = &dist.population;
    if curve.len() < 2 {
        return Err(Error::InvalidCurve(
            "population curve needs at least two nodes".into(),
        ));
    }
    let length = curve.length();
    let mut rng = dist.rng();
    (0..n)
        .map(|i| {
            let u: f64 = rng.gen();
            let t = if dist.stratified {
                (i as f64 + u) / n as f64 * length
            } else {
                u * length
            };
            let z: f64 = rng.sample(StandardNormal);
            let (q, normal, k, s) = frame_at(m, curve, t)?;
            let sd = curve.interpolate(&dist.normal_sd, k, s);
            if sd == 0.0 {
                return Ok(q);
            }
            m.exp(&normal.scaled(z * sd))
        })
        .collect()
}

/// Fréchet means of the samples inside `N(γ⁰(t), h)` for each `t`.
pub fn estimate_from_samples<M: Manifold>(
    m: &M,
    population: &Curve,
    samples: &[ManifoldPoint],
    h: f64,
    t_grid: &[f64],
) -> Result<Curve> {
    let nodes = par::map_slice(t_grid, |&t| {
        let q = population.point_at(m, t)?;
        let idx = members_within(m, samples, &q, h);
        if idx.is_empty() {
            return Err(Error::EmptyNeighborhood { radius: h });
        }
        let local: Vec<ManifoldPoint> = idx.into_iter().map(|i| samples[i]).collect();
        frechet_mean(m, &local, MEAN_TOL)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Curve::new(m, nodes)
}

/// Monte Carlo estimate of the continuous principal flow on `t_grid`.
pub fn continuous_flow_estimate<M: Manifold>(
    m: &M,
    dist: &CurveDistribution,
    h: f64,
    t_grid: &[f64],
    n_mc: usize,
) -> Result<Curve> {
    let samples = sample_along_curve(m, dist, n_mc)?;
    estimate_from_samples(m, &dist.population, &samples, h, t_grid)
}

/// Evenly spaced arc lengths in `[h, L - h]`, away from the curve's ends.
pub fn interior_grid(curve: &Curve, h: f64, spacing: f64) -> Result<Vec<f64>> {
    let (lo, hi) = (h, curve.length() - h);
    if !(hi > lo) || !(spacing > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "curve of length {} leaves no interior at h = {h}",
            curve.length()
        )));
    }
    let n = ((hi - lo) / spacing).ceil() as usize;
    Ok((0..=n)
        .map(|i| lo + (hi - lo) * i as f64 / n as f64)
        .collect())
}

/// `sd = h / Φ⁻¹(1 - ε/2)`: the normal sd at which a sample falls within `h`
/// of the curve with probability `1 - ε`.
pub fn sd_for_epsilon(h: f64, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(h / std.inverse_cdf(1.0 - 0.5 * epsilon))
}

/// Inverse of [`sd_for_epsilon`].
pub fn epsilon_for_sd(h: f64, sd: f64) -> f64 {
    if sd == 0.0 {
        return 0.0;
    }
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    2.0 * (1.0 - std.cdf(h / sd))
}

/// Settings shared by every row of a convergence experiment.
#[derive(Debug, Clone)]
pub struct ConvergenceSetup {
    pub populations: (Curve, Curve),
    pub h: f64,
    pub n_mc: usize,
    pub replicates: usize,
    pub seed: u64,
    /// Spacing of the arc-length grid the flows are estimated on.
    pub grid_spacing: f64,
    pub stratified: bool,
    pub boundary: BoundaryParams,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub sd: f64,
    /// Mean over replicates of the largest Euclidean node error of flow 1.
    pub flow_error: f64,
    pub flow_se: f64,
    /// Mean over replicates of the common-support Hausdorff distance to the
    /// population boundary.
    pub boundary_error: f64,
    pub boundary_se: f64,
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Hausdorff distance over the stretch both curves cover: nodes whose
/// nearest point on the other curve is one of its ends are left out. Traces
/// stop at a multiple of the step length, so their extents differ by up to
/// a step even when they lie on the same curve.
pub fn common_support_hausdorff<M: Manifold>(m: &M, a: &Curve, b: &Curve) -> Result<f64> {
    let one_way = |x: &Curve, y: &Curve| -> Result<f64> {
        let mut worst = 0.0f64;
        for p in x.nodes() {
            match project_to_curve(m, p, y) {
                Ok(proj) if proj.is_endpoint(y) => {}
                Ok(proj) => worst = worst.max(proj.distance),
                Err(Error::AmbiguousProjection { .. }) => {
                    worst = worst.max(distance_to_curve(m, p, y)?)
                }
                Err(e) => return Err(e),
            }
        }
        Ok(worst)
    };
    Ok(one_way(a, b)?.max(one_way(b, a)?))
}

/// Zero-spread flow through the population nodes at the grid positions.
fn grid_flow<M: Manifold>(m: &M, curve: &Curve, t_grid: &[f64], h: f64) -> Result<FlowResult> {
    let nodes = t_grid
        .iter()
        .map(|&t| curve.point_at(m, t))
        .collect::<Result<Vec<_>>>()?;
    FlowResult::from_curve(m, Curve::new(m, nodes)?, 0.0, h)
}

/// For each sd in a strictly decreasing schedule: estimate both flows from
/// fresh samples, trace their boundary, and compare with the population
/// flows and population boundary. Replicate `r` uses seed `seed + r`; the
/// two classes use separate random streams.
pub fn convergence_experiment<M: Manifold>(
    m: &M,
    setup: &ConvergenceSetup,
    sd_schedule: &[f64],
) -> Result<Vec<Result<ConvergenceRow>>> {
    if sd_schedule.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidParameter(
            "sd schedule must be strictly decreasing".into(),
        ));
    }
    if setup.replicates == 0 {
        return Err(Error::InvalidParameter(
            "need at least one replicate".into(),
        ));
    }
    let (pop1, pop2) = &setup.populations;
    let grid1 = interior_grid(pop1, setup.h, setup.grid_spacing)?;
    let grid2 = interior_grid(pop2, setup.h, setup.grid_spacing)?;
    let truth1 = grid_flow(m, pop1, &grid1, setup.h)?;
    let truth2 = grid_flow(m, pop2, &grid2, setup.h)?;
    let truth_boundary =
        trace_boundary(m, &truth1, &truth2, None, &setup.boundary).map_err(|f| f.error)?;

    let row = |sd: f64| -> Result<ConvergenceRow> {
        let reps = par::map_range(setup.replicates, |r| -> Result<(f64, f64)> {
            let seed = setup.seed.wrapping_add(r as u64);
            let d1 = CurveDistribution::constant(pop1.clone(), sd, seed)?
                .with_stratified(setup.stratified);
            let d2 = CurveDistribution::constant(pop2.clone(), sd, seed)?
                .with_stream(1)
                .with_stratified(setup.stratified);
            let est1 = continuous_flow_estimate(m, &d1, setup.h, &grid1, setup.n_mc)?;
            let est2 = continuous_flow_estimate(m, &d2, setup.h, &grid2, setup.n_mc)?;
            let flow_error = est1
                .nodes()
                .iter()
                .zip(truth1.curve.nodes())
                .map(|(a, b)| (a.coords() - b.coords()).norm())
                .fold(0.0, f64::max);
            let f1 = FlowResult::from_curve(m, est1, 0.0, setup.h)?;
            let f2 = FlowResult::from_curve(m, est2, 0.0, setup.h)?;
            let traced = trace_boundary(m, &f1, &f2, None, &setup.boundary).map_err(|f| f.error)?;
            Ok((
                flow_error,
                common_support_hausdorff(m, &traced.curve, &truth_boundary.curve)?,
            ))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let (fe, be): (Vec<f64>, Vec<f64>) = reps.into_iter().unzip();
        let (flow_error, flow_se) = mean_se(&fe);
        let (boundary_error, boundary_se) = mean_se(&be);
        Ok(ConvergenceRow {
            sd,
            flow_error,
            flow_se,
            boundary_error,
            boundary_se,
        })
    };
    Ok(sd_schedule.iter().map(|&sd| row(sd)).collect())
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Writes rows as `sd,flow_error,flow_se,boundary_error,boundary_se`.
pub fn write_convergence_csv<W: Write>(rows: &[ConvergenceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "sd",
        "flow_error",
        "flow_se",
        "boundary_error",
        "boundary_se",
    ])?;
    for r in rows {
        w.write_record(
            [
                r.sd,
                r.flow_error,
                r.flow_se,
                r.boundary_error,
                r.boundary_se,
            ]
            .iter()
            .map(|v| v.to_string()),
        )?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::geodesic_curve;
    use crate::manifold::Sphere;

    fn equator_arc() -> Curve {
        let a = ManifoldPoint::new(0.6f64.cos(), -0.6f64.sin(), 0.0);
        let b = ManifoldPoint::new(0.6f64.cos(), 0.6f64.sin(), 0.0);
        geodesic_curve(&Sphere, &a, &b, 60).unwrap()
    }

    #[test]
    fn zero_sd_samples_lie_on_the_curve() {
        let d = CurveDistribution::constant(equator_arc(), 0.0, 7).unwrap();
        for p in sample_along_curve(&Sphere, &d, 200).unwrap() {
            assert!(p.coords().z.abs() < 1e-9);
        }
    }

    #[test]
    fn equal_seeds_repeat() {
        let d = CurveDistribution::constant(equator_arc(), 0.05, 11).unwrap();
        let a = sample_along_curve(&Sphere, &d, 50).unwrap();
        let b = sample_along_curve(&Sphere, &d, 50).unwrap();
        assert_eq!(a, b);
        let c = sample_along_curve(&Sphere, &d.clone().with_stream(1), 50).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn offsets_are_centered() {
        let sd = 0.05;
        let n = 10_000;
        let d = CurveDistribution::constant(equator_arc(), sd, 3).unwrap();
        let pts = sample_along_curve(&Sphere, &d, n).unwrap();
        let mean: f64 = pts.iter().map(|p| p.coords().z.asin()).sum::<f64>() / n as f64;
        assert!(mean.abs() <= 3.0 * sd / (n as f64).sqrt());
    }

    #[test]
    fn noiseless_estimate_matches_population() {
        let pop = equator_arc();
        let d = CurveDistribution::constant(pop.clone(), 0.0, 1)
            .unwrap()
            .with_stratified(true);
        let grid = interior_grid(&pop, 0.1, 0.05).unwrap();
        let est = continuous_flow_estimate(&Sphere, &d, 0.1, &grid, 20_000).unwrap();
        for (p, &t) in est.nodes().iter().zip(&grid) {
            let q = pop.point_at(&Sphere, t).unwrap();
            assert!(Sphere.distance(p, &q) < 1e-4);
        }
    }

    #[test]
    fn epsilon_mapping_round_trips() {
        let sd = sd_for_epsilon(0.1, 0.05).unwrap();
        assert!((sd - 0.1 / 1.959963984540054).abs() < 1e-9);
        assert!((epsilon_for_sd(0.1, sd) - 0.05).abs() < 1e-9);
    }

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.5)).collect();
        assert!((log_log_slope(&x, &y) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn schedule_must_decrease() {
        let setup = ConvergenceSetup {
            populations: (equator_arc(), equator_arc()),
            h: 0.1,
            n_mc: 100,
            replicates: 1,
            seed: 0,
            grid_spacing: 0.05,
            stratified: true,
            boundary: BoundaryParams::default(),
        };
        assert!(convergence_experiment(&Sphere, &setup, &[0.01, 0.02]).is_err());
    }
}
