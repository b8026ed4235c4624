//! Margin-based two-class classification with a relative-gap rule for
//! points inside both spread tubes.

use crate::boundary::margin_detail;
use crate::error::{Error, Result};
use crate::flow::{principal_flow, FlowParams, FlowResult};
use crate::manifold::{Manifold, ManifoldPoint};
use crate::par;

pub const DEFAULT_TIE_TOL: f64 = 1e-6;

/// A labeled class: its samples and their principal flow.
#[derive(Debug, Clone)]
pub struct ClassModel {
    pub label: i8,
    pub cloud: Vec<ManifoldPoint>,
    pub flow: FlowResult,
}

impl ClassModel {
    pub fn new(label: i8, cloud: Vec<ManifoldPoint>, flow: FlowResult) -> Result<Self> {
        if label != 1 && label != -1 {
            return Err(Error::InvalidParameter(format!(
                "class label must be +1 or -1, got {label}"
            )));
        }
        Ok(ClassModel { label, cloud, flow })
    }

    /// Builds the principal flow of `cloud` at scale `h` from its default start.
    pub fn fit<M: Manifold>(
        m: &M,
        label: i8,
        cloud: Vec<ManifoldPoint>,
        h: f64,
        params: &FlowParams,
    ) -> Result<Self> {
        let flow = principal_flow(m, &cloud, h, None, params)?;
        ClassModel::new(label, cloud, flow)
    }

    pub fn h(&self) -> f64 {
        self.flow.locality_h
    }
}

/// Outcome of a decision. `+1` refers to the first model passed to
/// [`classify_point`] and `-1` to the second.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecisionLabel {
    Class(i8),
    Boundary,
    /// Inside both spread tubes; settled by the smaller relative gap.
    Overlap(i8),
}

impl DecisionLabel {
    /// The side a decision picks, if any.
    pub fn side(&self) -> Option<i8> {
        match *self {
            DecisionLabel::Class(s) | DecisionLabel::Overlap(s) => Some(s),
            DecisionLabel::Boundary => None,
        }
    }

    pub fn swapped(&self) -> Self {
        match *self {
            DecisionLabel::Class(s) => DecisionLabel::Class(-s),
            DecisionLabel::Overlap(s) => DecisionLabel::Overlap(-s),
            DecisionLabel::Boundary => DecisionLabel::Boundary,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub label: DecisionLabel,
    pub d1: f64,
    pub d2: f64,
    pub r1: Option<f64>,
    pub r2: Option<f64>,
}

impl Decision {
    /// The class label of the chosen model, or `None` on the boundary.
    pub fn model_label(&self, m1: &ClassModel, m2: &ClassModel) -> Option<i8> {
        self.label
            .side()
            .map(|s| if s == 1 { m1.label } else { m2.label })
    }
}

/// `max(0, m_γ(p))`: zero inside the spread tube.
pub fn class_distance<M: Manifold>(m: &M, p: &ManifoldPoint, model: &ClassModel) -> Result<f64> {
    Ok(margin_detail(m, p, &model.flow)?.margin.max(0.0))
}

/// `d(p, γ)^α / σ(p)^β`.
pub fn relative_gap<M: Manifold>(
    m: &M,
    p: &ManifoldPoint,
    model: &ClassModel,
    alpha: f64,
    beta: f64,
) -> Result<f64> {
    let detail = margin_detail(m, p, &model.flow)?;
    gap_from(detail.projection.distance, detail.spread, alpha, beta)
}

fn gap_from(distance: f64, spread: f64, alpha: f64, beta: f64) -> Result<f64> {
    if !(spread > 0.0) {
        return Err(Error::ZeroSpread);
    }
    Ok(distance.powf(alpha) / spread.powf(beta))
}

/// Classification rule. Points in both tubes go to the smaller relative
/// gap; otherwise equal distances (within `tie_tol`) are on the boundary and
/// unequal ones go to the nearer class.
pub fn classify_point<M: Manifold>(
    m: &M,
    p: &ManifoldPoint,
    m1: &ClassModel,
    m2: &ClassModel,
    alpha: f64,
    beta: f64,
    tie_tol: f64,
) -> Result<Decision> {
    let a = margin_detail(m, p, &m1.flow)?;
    let b = margin_detail(m, p, &m2.flow)?;
    let (d1, d2) = (a.margin.max(0.0), b.margin.max(0.0));
    if d1 == 0.0 && d2 == 0.0 {
        let r1 = gap_from(a.projection.distance, a.spread, alpha, beta)?;
        let r2 = gap_from(b.projection.distance, b.spread, alpha, beta)?;
        let label = if (r1 - r2).abs() <= tie_tol {
            DecisionLabel::Boundary
        } else if r1 < r2 {
            DecisionLabel::Overlap(1)
        } else {
            DecisionLabel::Overlap(-1)
        };
        return Ok(Decision {
            label,
            d1,
            d2,
            r1: Some(r1),
            r2: Some(r2),
        });
    }
    Ok(Decision {
        label: decide(d1, d2, tie_tol),
        d1,
        d2,
        r1: None,
        r2: None,
    })
}

fn decide(d1: f64, d2: f64, tie_tol: f64) -> DecisionLabel {
    if (d1 - d2).abs() <= tie_tol {
        DecisionLabel::Boundary
    } else if d1 < d2 {
        DecisionLabel::Class(1)
    } else {
        DecisionLabel::Class(-1)
    }
}

/// [`classify_point`] over a mesh; failures stay in place as errors.
pub fn label_grid<M: Manifold>(
    m: &M,
    mesh: &[ManifoldPoint],
    m1: &ClassModel,
    m2: &ClassModel,
    alpha: f64,
    beta: f64,
    tie_tol: f64,
) -> Vec<Result<Decision>> {
    par::map_slice(mesh, |p| classify_point(m, p, m1, m2, alpha, beta, tie_tol))
}

/// Misclassification summary; boundary decisions count as misses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRate {
    pub rate: f64,
    /// Misses among points whose truth is `+1` and `-1`, in that order.
    pub misses: (usize, usize),
    /// How many of those misses were boundary decisions.
    pub boundary_misses: (usize, usize),
}

/// Error rate of side decisions against truth labels in `{+1, -1}`.
pub fn error_rate(decisions: &[DecisionLabel], truth: &[i8]) -> Result<ErrorRate> {
    if decisions.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: decisions.len(),
            right: truth.len(),
        });
    }
    let mut misses = (0, 0);
    let mut boundary = (0, 0);
    for (d, &t) in decisions.iter().zip(truth) {
        let slot = match t {
            1 => 0,
            -1 => 1,
            other => {
                return Err(Error::InvalidParameter(format!(
                    "truth label must be +1 or -1, got {other}"
                )))
            }
        };
        let missed = d.side() != Some(t);
        let (count, on_boundary) = if slot == 0 {
            (&mut misses.0, &mut boundary.0)
        } else {
            (&mut misses.1, &mut boundary.1)
        };
        if missed {
            *count += 1;
            if *d == DecisionLabel::Boundary {
                *on_boundary += 1;
            }
        }
    }
    let rate = if truth.is_empty() {
        0.0
    } else {
        (misses.0 + misses.1) as f64 / truth.len() as f64
    };
    Ok(ErrorRate {
        rate,
        misses,
        boundary_misses: boundary,
    })
}
