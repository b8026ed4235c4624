//! Polyline output: CSV node tables and orthographic SVG sketches.

use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::curve::Curve;
use crate::error::{Error, Result};
use crate::manifold::{Manifold, ManifoldPoint, Vec3};

const PALETTE: [&str; 4] = ["#000000", "#1f4fbf", "#7f7f7f", "#bf6f1f"];
const MARGIN: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotFormat {
    Csv,
    Svg,
}

impl FromStr for PlotFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(PlotFormat::Csv),
            "svg" => Ok(PlotFormat::Svg),
            other => Err(Error::InvalidParameter(format!(
                "unknown output format {other:?}"
            ))),
        }
    }
}

/// Longitude/latitude window in degrees; anything outside is not drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub lon_min: f64,
    pub lon_max: f64,
    pub lat_min: f64,
    pub lat_max: f64,
}

impl BBox {
    pub fn contains(&self, p: &ManifoldPoint) -> bool {
        let (lon, lat) = p.to_lonlat_deg();
        (self.lon_min..=self.lon_max).contains(&lon) && (self.lat_min..=self.lat_max).contains(&lat)
    }
}

impl FromStr for BBox {
    type Err = Error;

    /// `lon_min,lon_max,lat_min,lat_max`.
    fn from_str(s: &str) -> Result<Self> {
        let v: Vec<f64> = s
            .split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidParameter(format!("bbox {s:?}: {e}")))?;
        if v.len() != 4 || v[0] > v[1] || v[2] > v[3] {
            return Err(Error::InvalidParameter(format!(
                "bbox {s:?}: expected lon_min,lon_max,lat_min,lat_max"
            )));
        }
        Ok(BBox {
            lon_min: v[0],
            lon_max: v[1],
            lat_min: v[2],
            lat_max: v[3],
        })
    }
}

/// Things to draw. Curves are stroked in order, labeled points on top.
#[derive(Debug, Clone, Default)]
pub struct Scene {
    pub curves: Vec<(Curve, String)>,
    pub points: Vec<(ManifoldPoint, i8)>,
    /// Looking direction toward the sphere center; defaults to the centroid
    /// of everything in the scene.
    pub viewpoint: Option<Vec3>,
    pub bbox: Option<BBox>,
    pub size: f64,
}

impl Scene {
    pub fn new(size: f64) -> Self {
        Scene {
            size,
            ..Default::default()
        }
    }

    pub fn add_curve(&mut self, curve: Curve) -> &mut Self {
        let color = PALETTE[self.curves.len() % PALETTE.len()].to_string();
        self.curves.push((curve, color));
        self
    }

    fn all_points(&self) -> impl Iterator<Item = &ManifoldPoint> {
        self.curves
            .iter()
            .flat_map(|(c, _)| c.nodes())
            .chain(self.points.iter().map(|(p, _)| p))
    }

    fn view(&self) -> Vec3 {
        let v = self
            .viewpoint
            .unwrap_or_else(|| self.all_points().map(|p| p.coords()).sum());
        v.try_normalize(1e-12).unwrap_or_else(Vec3::x)
    }

    /// Renders the scene. Output depends only on the inputs, with every
    /// coordinate printed to three decimals.
    pub fn to_svg(&self) -> String {
        let view = self.view();
        let helper = if view.z.abs() < 0.9 {
            Vec3::z()
        } else {
            Vec3::x()
        };
        let right = helper.cross(&view).normalize();
        let up = view.cross(&right);
        let visible = |p: &ManifoldPoint| {
            p.coords().dot(&view) > 0.0 && self.bbox.map_or(true, |b| b.contains(p))
        };
        let plane = |p: &ManifoldPoint| (p.coords().dot(&right), p.coords().dot(&up));

        let (mut lo, mut hi) = (
            (f64::INFINITY, f64::INFINITY),
            (f64::NEG_INFINITY, f64::NEG_INFINITY),
        );
        for p in self.all_points().filter(|p| visible(p)) {
            let (x, y) = plane(p);
            lo = (lo.0.min(x), lo.1.min(y));
            hi = (hi.0.max(x), hi.1.max(y));
        }
        if !lo.0.is_finite() {
            lo = (-1.0, -1.0);
            hi = (1.0, 1.0);
        }
        let span = (hi.0 - lo.0).max(hi.1 - lo.1).max(1e-9);
        let scale = (self.size - 2.0 * MARGIN) / span;
        let screen = |p: &ManifoldPoint| {
            let (x, y) = plane(p);
            (
                MARGIN + (x - lo.0) * scale,
                self.size - MARGIN - (y - lo.1) * scale,
            )
        };

        let mut out = String::new();
        let size = num(self.size);
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        for (curve, color) in &self.curves {
            for run in visible_runs(curve.nodes(), visible) {
                let mut d = String::new();
                for (i, p) in run.iter().enumerate() {
                    let (x, y) = screen(p);
                    let _ = write!(
                        d,
                        "{}{} {}",
                        if i == 0 { "M" } else { " L" },
                        num(x),
                        num(y)
                    );
                }
                let _ = writeln!(
                    out,
                    r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.5"/>"#
                );
            }
        }
        for (p, label) in self.points.iter().filter(|(p, _)| visible(p)) {
            let (x, y) = screen(p);
            let fill = if *label > 0 { "#2ca02c" } else { "#d62728" };
            let _ = writeln!(
                out,
                r#"<circle cx="{}" cy="{}" r="2" fill="{fill}"/>"#,
                num(x),
                num(y)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

fn num(x: f64) -> String {
    let s = format!("{x:.3}");
    if s == "-0.000" {
        "0.000".into()
    } else {
        s
    }
}

/// Maximal stretches of consecutive visible nodes.
fn visible_runs(
    nodes: &[ManifoldPoint],
    visible: impl Fn(&ManifoldPoint) -> bool,
) -> Vec<&[ManifoldPoint]> {
    nodes
        .split(|p| !visible(p))
        .filter(|run| !run.is_empty())
        .collect()
}

/// Writes `x,y,z,cumlen` per node. With several curves a leading `curve`
/// index column tells them apart.
pub fn write_curve_csv<W: Write>(curves: &[Curve], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let many = curves.len() > 1;
    if many {
        w.write_record(["curve", "x", "y", "z", "cumlen"])?;
    } else {
        w.write_record(["x", "y", "z", "cumlen"])?;
    }
    for (k, c) in curves.iter().enumerate() {
        for (p, s) in c.nodes().iter().zip(c.cumulative_length()) {
            let v = p.coords();
            let mut row = vec![
                v.x.to_string(),
                v.y.to_string(),
                v.z.to_string(),
                s.to_string(),
            ];
            if many {
                row.insert(0, k.to_string());
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads curves written by [`write_curve_csv`].
pub fn read_curve_csv<M: Manifold, R: Read>(m: &M, input: R) -> Result<Vec<Curve>> {
    let mut rdr = csv::Reader::from_reader(input);
    let many = rdr.headers()?.get(0) == Some("curve");
    let mut groups: Vec<Vec<ManifoldPoint>> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let vals: Vec<f64> = record
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
        let (k, xyz) = if many {
            (vals[0] as usize, &vals[1..4])
        } else {
            (0, &vals[0..3])
        };
        while groups.len() <= k {
            groups.push(Vec::new());
        }
        let p =
            ManifoldPoint::try_from_vector(Vec3::new(xyz[0], xyz[1], xyz[2])).map_err(|_| {
                Error::Parse {
                    line,
                    message: "zero vector".into(),
                }
            })?;
        groups[k].push(p);
    }
    groups
        .into_iter()
        .map(|nodes| {
            if nodes.len() == 1 {
                Ok(Curve::single(nodes[0]))
            } else {
                Curve::new(m, nodes)
            }
        })
        .collect()
}

/// Writes `curves` to `path` as a CSV node table or an SVG sketch.
pub fn emit_polyline(curves: &[Curve], path: &Path, format: PlotFormat) -> Result<()> {
    if curves.is_empty() || curves.iter().any(|c| c.is_empty()) {
        return Err(Error::InvalidCurve("nothing to emit".into()));
    }
    let bytes = match format {
        PlotFormat::Csv => {
            let mut buf = Vec::new();
            write_curve_csv(curves, &mut buf)?;
            buf
        }
        PlotFormat::Svg => {
            let mut scene = Scene::new(600.0);
            for c in curves {
                scene.add_curve(c.clone());
            }
            scene.to_svg().into_bytes()
        }
    };
    fs::write(path, bytes).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}
