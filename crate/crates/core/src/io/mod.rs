//! Data ingestion, synthetic generators, the bandwidth sweep, and plot output.

mod generate;
mod plot;
mod sweep;

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::manifold::{ManifoldPoint, Vec3};

pub use generate::{generate_band, generate_pair, pair_templates, template, PairShape, Shape};
pub use plot::{emit_polyline, read_curve_csv, write_curve_csv, BBox, PlotFormat, Scene};
pub use sweep::{
    best_cell, parse_grid, sweep, write_sweep_csv, CellStatus, SweepCell, SweepConfig,
};

/// Largest accepted deviation of an `xyz` row from unit norm.
pub const NORM_TOL: f64 = 1e-3;

/// Column layout of a point file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointFormat {
    /// `x,y,z` on the unit sphere.
    Xyz,
    /// `lon,lat` in degrees.
    LonLat,
}

impl FromStr for PointFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xyz" => Ok(PointFormat::Xyz),
            "lonlat" => Ok(PointFormat::LonLat),
            other => Err(Error::InvalidParameter(format!(
                "unknown point format {other:?}"
            ))),
        }
    }
}

/// Labeled points with a note on where they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub points: Vec<ManifoldPoint>,
    pub labels: Vec<i8>,
    pub source: String,
}

impl Dataset {
    pub fn new(
        points: Vec<ManifoldPoint>,
        labels: Vec<i8>,
        source: impl Into<String>,
    ) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::LengthMismatch {
                left: points.len(),
                right: labels.len(),
            });
        }
        if let Some(bad) = labels.iter().find(|l| **l != 1 && **l != -1) {
            return Err(Error::InvalidParameter(format!(
                "label must be +1 or -1, got {bad}"
            )));
        }
        Ok(Dataset {
            points,
            labels,
            source: source.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points carrying `label`, in file order.
    pub fn class(&self, label: i8) -> Vec<ManifoldPoint> {
        self.points
            .iter()
            .zip(&self.labels)
            .filter(|(_, l)| **l == label)
            .map(|(p, _)| *p)
            .collect()
    }

    /// Concatenates two datasets; the source strings are joined with `+`.
    pub fn concat(&self, other: &Dataset) -> Dataset {
        let mut points = self.points.clone();
        points.extend_from_slice(&other.points);
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Dataset {
            points,
            labels,
            source: format!("{}+{}", self.source, other.source),
        }
    }

    /// Same points with every label replaced by `label`.
    pub fn relabeled(&self, label: i8) -> Result<Dataset> {
        Dataset::new(
            self.points.clone(),
            vec![label; self.len()],
            self.source.clone(),
        )
    }
}

fn column(headers: &csv::StringRecord, names: &[&str]) -> Option<usize> {
    headers
        .iter()
        .position(|h| names.iter().any(|n| h.trim().eq_ignore_ascii_case(n)))
}

fn field(record: &csv::StringRecord, idx: usize, line: usize, name: &str) -> Result<f64> {
    let raw = record.get(idx).ok_or_else(|| Error::Parse {
        line,
        message: format!("missing {name} column"),
    })?;
    raw.trim().parse::<f64>().map_err(|e| Error::Parse {
        line,
        message: format!("{name}: {e} ({raw:?})"),
    })
}

/// Reads points from CSV text. Rows without a `label` column get
/// `default_label`; if that is `None` the column is required.
pub fn read_dataset<R: Read>(
    reader: R,
    format: PointFormat,
    default_label: Option<i8>,
    source: &str,
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let missing = |what: &str| Error::Parse {
        line: 1,
        message: format!("header has no {what} column"),
    };
    let coords: Vec<usize> = match format {
        PointFormat::Xyz => ["x", "y", "z"]
            .iter()
            .map(|c| column(&headers, &[c]).ok_or_else(|| missing(c)))
            .collect::<Result<_>>()?,
        PointFormat::LonLat => vec![
            column(&headers, &["lon", "longitude"]).ok_or_else(|| missing("lon"))?,
            column(&headers, &["lat", "latitude"]).ok_or_else(|| missing("lat"))?,
        ],
    };
    let label_col = column(&headers, &["label"]);
    if label_col.is_none() && default_label.is_none() {
        return Err(missing("label"));
    }

    let mut points = Vec::new();
    let mut labels = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let p = match format {
            PointFormat::Xyz => {
                let v = Vec3::new(
                    field(&record, coords[0], line, "x")?,
                    field(&record, coords[1], line, "y")?,
                    field(&record, coords[2], line, "z")?,
                );
                let norm = v.norm();
                if !((norm - 1.0).abs() <= NORM_TOL) {
                    return Err(Error::Normalization { line, norm });
                }
                ManifoldPoint::new(v.x, v.y, v.z)
            }
            PointFormat::LonLat => {
                let lon = field(&record, coords[0], line, "lon")?;
                let lat = field(&record, coords[1], line, "lat")?;
                if !lon.is_finite() || !(-90.0..=90.0).contains(&lat) {
                    return Err(Error::Parse {
                        line,
                        message: format!("coordinates out of range ({lon}, {lat})"),
                    });
                }
                ManifoldPoint::from_lonlat_deg(lon, lat)
            }
        };
        let label = match label_col {
            Some(c) => {
                let raw = record.get(c).unwrap_or("").trim();
                match raw.parse::<i8>() {
                    Ok(l @ (1 | -1)) => l,
                    _ => {
                        return Err(Error::Parse {
                            line,
                            message: format!("label must be 1 or -1, got {raw:?}"),
                        })
                    }
                }
            }
            None => default_label.unwrap_or(1),
        };
        points.push(p);
        labels.push(label);
    }
    Dataset::new(points, labels, source)
}

/// [`read_dataset`] on a file; the path becomes the source string.
pub fn load_dataset(
    path: &Path,
    format: PointFormat,
    default_label: Option<i8>,
) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_dataset(
        BufReader::new(file),
        format,
        default_label,
        &path.display().to_string(),
    )
}

/// Writes `x,y,z,label` or `lon,lat,label` rows.
pub fn write_dataset<W: Write>(data: &Dataset, format: PointFormat, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    match format {
        PointFormat::Xyz => w.write_record(["x", "y", "z", "label"])?,
        PointFormat::LonLat => w.write_record(["lon", "lat", "label"])?,
    }
    for (p, l) in data.points.iter().zip(&data.labels) {
        let label = l.to_string();
        match format {
            PointFormat::Xyz => {
                let c = p.coords();
                w.write_record([c.x.to_string(), c.y.to_string(), c.z.to_string(), label])?;
            }
            PointFormat::LonLat => {
                let (lon, lat) = p.to_lonlat_deg();
                w.write_record([lon.to_string(), lat.to_string(), label])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
