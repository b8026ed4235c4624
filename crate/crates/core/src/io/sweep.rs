//! Misclassification tables over a grid of bandwidth pairs.

use std::fmt;
use std::io::Write;

use crate::boundary::{trace_boundary, BoundaryParams};
use crate::classify::{classify_point, error_rate, ClassModel, DecisionLabel, DEFAULT_TIE_TOL};
use crate::error::{Error, Result};
use crate::flow::FlowParams;
use crate::manifold::{Manifold, ManifoldPoint};
use crate::par;

/// What happened in one cell of the sweep.
#[derive(Debug, Clone, PartialEq)]
pub enum CellStatus {
    Ok,
    /// Flows were fit and points classified, but the boundary trace failed.
    BoundaryFailed(&'static str),
    /// The flow for class 1 or 2 could not be fit; every point counts as missed.
    FlowFailed {
        class: u8,
        error: &'static str,
    },
}

impl fmt::Display for CellStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellStatus::Ok => f.write_str("ok"),
            CellStatus::BoundaryFailed(e) => write!(f, "boundary:{e}"),
            CellStatus::FlowFailed { class, error } => write!(f, "flow{class}:{error}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub h1: f64,
    pub h2: f64,
    pub misses1: usize,
    pub misses2: usize,
    pub rate: f64,
    pub status: CellStatus,
    /// Length of the traced boundary when the trace succeeded.
    pub boundary_length: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct SweepConfig {
    pub flow: FlowParams,
    pub boundary: BoundaryParams,
    pub alpha: f64,
    pub beta: f64,
    pub tie_tol: f64,
    /// Skip the boundary trace and only classify.
    pub skip_boundary: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            flow: FlowParams::default(),
            boundary: BoundaryParams::default(),
            alpha: 1.0,
            beta: 1.0,
            tie_tol: DEFAULT_TIE_TOL,
            skip_boundary: false,
        }
    }
}

/// Parses `start:stop:step` (inclusive) or a comma-separated list.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = |msg: String| Error::InvalidParameter(format!("grid {spec:?}: {msg}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(e.to_string()));
    let values = if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("expected start:stop:step".into()));
        }
        let (start, stop, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(step > 0.0) || stop < start {
            return Err(bad("need step > 0 and stop >= start".into()));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        // Round to the step's decimal places so 0.1 + 3*0.01 prints as 0.13.
        (0..count)
            .map(|i| round12(start + i as f64 * step))
            .collect()
    } else {
        spec.split(',').map(num).collect::<Result<Vec<_>>>()?
    };
    if values.is_empty() || values.iter().any(|v| !(*v > 0.0)) {
        return Err(bad("values must be positive".into()));
    }
    Ok(values)
}

fn round12(x: f64) -> f64 {
    (x * 1e12).round() / 1e12
}

type Fit = std::result::Result<ClassModel, &'static str>;

fn classify_cell<M: Manifold>(
    m: &M,
    m1: &ClassModel,
    m2: &ClassModel,
    points: &[(ManifoldPoint, i8)],
    cfg: &SweepConfig,
) -> Result<(usize, usize)> {
    let decisions: Vec<DecisionLabel> = points
        .iter()
        .map(|(p, _)| {
            classify_point(m, p, m1, m2, cfg.alpha, cfg.beta, cfg.tie_tol)
                .map(|d| d.label)
                .unwrap_or(DecisionLabel::Boundary)
        })
        .collect();
    let truth: Vec<i8> = points.iter().map(|(_, l)| *l).collect();
    Ok(error_rate(&decisions, &truth)?.misses)
}

fn run_cell<M: Manifold>(
    m: &M,
    f1: &Fit,
    f2: &Fit,
    h1: f64,
    h2: f64,
    points: &[(ManifoldPoint, i8)],
    n1: usize,
    n2: usize,
    cfg: &SweepConfig,
) -> SweepCell {
    let total = (n1 + n2) as f64;
    let failed = |class, error| SweepCell {
        h1,
        h2,
        misses1: n1,
        misses2: n2,
        rate: 1.0,
        status: CellStatus::FlowFailed { class, error },
        boundary_length: None,
    };
    let (m1, m2) = match (f1, f2) {
        (Err(e), _) => return failed(1, e),
        (_, Err(e)) => return failed(2, e),
        (Ok(a), Ok(b)) => (a, b),
    };
    let (status, boundary_length) = if cfg.skip_boundary {
        (CellStatus::Ok, None)
    } else {
        match trace_boundary(m, &m1.flow, &m2.flow, None, &cfg.boundary) {
            Ok(b) => (CellStatus::Ok, Some(b.curve.length())),
            Err(f) => (CellStatus::BoundaryFailed(f.error.name()), None),
        }
    };
    let (misses1, misses2) = classify_cell(m, m1, m2, points, cfg).unwrap_or((n1, n2));
    SweepCell {
        h1,
        h2,
        misses1,
        misses2,
        rate: (misses1 + misses2) as f64 / total,
        status,
        boundary_length,
    }
}

/// Fits a flow per class and bandwidth, then fills the `h1 × h2` table in
/// row-major order (`h1` outer). Cells run concurrently; failures become
/// statuses rather than errors.
pub fn sweep<M: Manifold>(
    m: &M,
    class1: &[ManifoldPoint],
    class2: &[ManifoldPoint],
    h1_grid: &[f64],
    h2_grid: &[f64],
    cfg: &SweepConfig,
) -> Result<Vec<SweepCell>> {
    if h1_grid.is_empty() || h2_grid.is_empty() {
        return Err(Error::InvalidParameter(
            "sweep grids must be nonempty".into(),
        ));
    }
    let fit = |label: i8, cloud: &[ManifoldPoint], h: f64| -> Fit {
        ClassModel::fit(m, label, cloud.to_vec(), h, &cfg.flow).map_err(|e| e.name())
    };
    let fits1 = par::map_slice(h1_grid, |&h| fit(1, class1, h));
    let fits2 = par::map_slice(h2_grid, |&h| fit(-1, class2, h));

    let points: Vec<(ManifoldPoint, i8)> = class1
        .iter()
        .map(|p| (*p, 1))
        .chain(class2.iter().map(|p| (*p, -1)))
        .collect();
    let cols = h2_grid.len();
    Ok(par::map_range(h1_grid.len() * cols, |k| {
        let (i, j) = (k / cols, k % cols);
        run_cell(
            m,
            &fits1[i],
            &fits2[j],
            h1_grid[i],
            h2_grid[j],
            &points,
            class1.len(),
            class2.len(),
            cfg,
        )
    }))
}

/// Lowest-rate cell; ties go to the earliest in table order.
pub fn best_cell(cells: &[SweepCell]) -> Option<&SweepCell> {
    cells
        .iter()
        .fold(None, |best: Option<&SweepCell>, c| match best {
            Some(b) if b.rate <= c.rate => Some(b),
            _ => Some(c),
        })
}

pub fn write_sweep_csv<W: Write>(cells: &[SweepCell], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "h1",
        "h2",
        "misses1",
        "misses2",
        "rate",
        "status",
        "boundary_length",
    ])?;
    for c in cells {
        w.write_record([
            c.h1.to_string(),
            c.h2.to_string(),
            c.misses1.to_string(),
            c.misses2.to_string(),
            format!("{:.6}", c.rate),
            c.status.to_string(),
            c.boundary_length
                .map(|l| format!("{l:.6}"))
                .unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
