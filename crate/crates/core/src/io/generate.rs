//! Synthetic labeled clouds scattered about template curves.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::str::FromStr;

use nalgebra::Rotation3;

use super::Dataset;
use crate::curve::Curve;
use crate::error::{Error, Result};
use crate::manifold::{Manifold, ManifoldPoint, TangentVector, Vec3};
use crate::sim::{sample_along_curve, CurveDistribution};

const TEMPLATE_NODES: usize = 240;

/// Single-class template shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    C,
    S,
    GreatCircle,
}

impl FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "c" => Ok(Shape::C),
            "s" => Ok(Shape::S),
            "greatcircle" | "great-circle" => Ok(Shape::GreatCircle),
            other => Err(Error::InvalidParameter(format!("unknown shape {other:?}"))),
        }
    }
}

/// Two-class layouts: an upturned C resting above an S, or two latitude bands mirrored
/// across the equator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairShape {
    Cs,
    Bands { latitude_deg: f64 },
}

impl FromStr for PairShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cs" => Ok(PairShape::Cs),
            "bands" => Ok(PairShape::Bands { latitude_deg: 20.0 }),
            other => Err(Error::InvalidParameter(format!(
                "unknown pair shape {other:?}"
            ))),
        }
    }
}

/// Maps planar coordinates around `(1, 0, 0)` onto the sphere through the
/// exponential map, `u` along `y` and `v` along `z`.
fn chart_curve<M: Manifold>(m: &M, uv: impl Iterator<Item = (f64, f64)>) -> Result<Curve> {
    let base = ManifoldPoint::new(1.0, 0.0, 0.0);
    let nodes = uv
        .map(|(u, v)| m.exp(&TangentVector::new(base, Vec3::new(0.0, u, v))))
        .collect::<Result<Vec<_>>>()?;
    Curve::new(m, nodes)
}

fn arc(
    center: (f64, f64),
    r: f64,
    from: f64,
    to: f64,
    n: usize,
) -> impl Iterator<Item = (f64, f64)> {
    (0..n).map(move |i| {
        let a = from + (to - from) * i as f64 / (n - 1) as f64;
        (center.0 + r * a.cos(), center.1 + r * a.sin())
    })
}

/// A three-quarter circle of radius 0.5 whose gap faces `opening` radians.
fn c_points(center: (f64, f64), opening: f64) -> impl Iterator<Item = (f64, f64)> {
    arc(
        center,
        0.5,
        opening + FRAC_PI_4,
        opening + 2.0 * PI - FRAC_PI_4,
        TEMPLATE_NODES,
    )
}

fn s_points(center: (f64, f64)) -> impl Iterator<Item = (f64, f64)> {
    let half = TEMPLATE_NODES / 2;
    let (x, y) = center;
    // Upper bowl counter-clockwise into the middle, lower bowl clockwise out.
    let upper = arc((x, y + 0.25), 0.25, FRAC_PI_4, 3.0 * FRAC_PI_2, half);
    let lower = arc((x, y - 0.25), 0.25, FRAC_PI_2, -3.0 * FRAC_PI_4, half).skip(1);
    upper.chain(lower)
}

/// The template curve for `shape`, before any pose.
pub fn template<M: Manifold>(m: &M, shape: Shape) -> Result<Curve> {
    match shape {
        Shape::C => chart_curve(m, c_points((0.0, 0.0), 0.0)),
        Shape::S => chart_curve(m, s_points((0.0, 0.0))),
        Shape::GreatCircle => chart_curve(
            m,
            (0..TEMPLATE_NODES).map(|i| (-0.8 + 1.6 * i as f64 / (TEMPLATE_NODES - 1) as f64, 0.0)),
        ),
    }
}

fn latitude_arc<M: Manifold>(m: &M, lat_deg: f64) -> Result<Curve> {
    let nodes = (0..TEMPLATE_NODES)
        .map(|i| {
            ManifoldPoint::from_lonlat_deg(
                -40.0 + 80.0 * i as f64 / (TEMPLATE_NODES - 1) as f64,
                lat_deg,
            )
        })
        .collect();
    Curve::new(m, nodes)
}

fn check(n: usize, sd: f64) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 points, got {n}"
        )));
    }
    if !(sd >= 0.0 && sd.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "noise sd must be nonnegative, got {sd}"
        )));
    }
    Ok(())
}

fn scatter<M: Manifold>(
    m: &M,
    curve: &Curve,
    n: usize,
    sd: f64,
    pose: &Rotation3<f64>,
    seed: u64,
    stream: u64,
) -> Result<Vec<ManifoldPoint>> {
    let dist = CurveDistribution::constant(curve.clone(), sd, seed)?.with_stream(stream);
    Ok(sample_along_curve(m, &dist, n)?
        .iter()
        .map(|p| p.rotated(pose))
        .collect())
}

/// `n` points about the template for `shape`, rotated by `pose`, all
/// labeled `label`.
pub fn generate_band<M: Manifold>(
    m: &M,
    shape: Shape,
    n: usize,
    noise_sd: f64,
    pose: &Rotation3<f64>,
    seed: u64,
    label: i8,
) -> Result<Dataset> {
    check(n, noise_sd)?;
    let points = scatter(m, &template(m, shape)?, n, noise_sd, pose, seed, 0)?;
    Dataset::new(
        points,
        vec![label; n],
        format!("{shape:?} n={n} sd={noise_sd} seed={seed}"),
    )
}

/// Template curves for both classes of a pair layout, before any pose.
pub fn pair_templates<M: Manifold>(m: &M, shape: PairShape) -> Result<(Curve, Curve)> {
    match shape {
        PairShape::Cs => Ok((
            chart_curve(m, c_points((0.0, 0.7), FRAC_PI_2))?,
            chart_curve(m, s_points((0.0, -0.45)))?,
        )),
        PairShape::Bands { latitude_deg } => Ok((
            latitude_arc(m, latitude_deg)?,
            latitude_arc(m, -latitude_deg)?,
        )),
    }
}

/// Two classes of `n` points each: the first labeled `+1`, the second `-1`,
/// with per-class noise and independent random streams.
pub fn generate_pair<M: Manifold>(
    m: &M,
    shape: PairShape,
    n: usize,
    noise_sd: (f64, f64),
    pose: &Rotation3<f64>,
    seed: u64,
) -> Result<Dataset> {
    check(n, noise_sd.0)?;
    check(n, noise_sd.1)?;
    let (c1, c2) = pair_templates(m, shape)?;
    let mut points = scatter(m, &c1, n, noise_sd.0, pose, seed, 0)?;
    points.extend(scatter(m, &c2, n, noise_sd.1, pose, seed, 1)?);
    let mut labels = vec![1i8; n];
    labels.extend(vec![-1i8; n]);
    Dataset::new(
        points,
        labels,
        format!("{shape:?} n={n}+{n} sd={noise_sd:?} seed={seed}"),
    )
}
