use thiserror::Error;

/// Every failure the toolkit can report.
///
/// Variants mirror the domain conditions that stop a computation: cut-locus
/// inputs, empty neighborhoods, degenerate local spectra, and so on. The CLI
/// prints [`Error::name`] alongside the message.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point pair lies on the cut locus ({context})")]
    CutLocus { context: &'static str },

    #[error("no samples within radius {radius} of the query point")]
    EmptyNeighborhood { radius: f64 },

    #[error("local spectrum is degenerate (lambda1 = {lambda1:e}, lambda2 = {lambda2:e}){}", at_index(*.index))]
    DegenerateSpectrum {
        lambda1: f64,
        lambda2: f64,
        index: Option<usize>,
    },

    #[error("cloud is not contained in an open hemisphere (mean log norm {norm})")]
    Hemisphere { norm: f64 },

    #[error("{what} did not converge after {iterations} iterations (best residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("projection onto curve is ambiguous: nodes {first} and {second} are both nearest")]
    AmbiguousProjection { first: usize, second: usize },

    #[error("flows are not separated along the connecting geodesic (residuals {at_start:e}, {at_end:e})")]
    Separation { at_start: f64, at_end: f64 },

    #[error("projection reached the end of flow {flow}")]
    EndOfFlow { flow: usize },

    #[error("local spread is zero at the projection point")]
    ZeroSpread,

    #[error("length mismatch: {left} decisions vs {right} labels")]
    LengthMismatch { left: usize, right: usize },

    #[error("classes are not linearly separable (closest pair A[{a}], B[{b}])")]
    Inseparable { a: usize, b: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid curve: {0}")]
    InvalidCurve(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("row {line} has norm {norm}, expected 1")]
    Normalization { line: usize, norm: f64 },

    #[error("io error: {0}")]
    Io(String),
}

fn at_index(index: Option<usize>) -> String {
    match index {
        Some(i) => format!(" at index {i}"),
        None => String::new(),
    }
}

impl Error {
    /// Stable error name, as printed by the command-line tool.
    pub fn name(&self) -> &'static str {
        match self {
            Error::CutLocus { .. } => "CutLocusError",
            Error::EmptyNeighborhood { .. } => "EmptyNeighborhoodError",
            Error::DegenerateSpectrum { .. } => "DegenerateSpectrumError",
            Error::Hemisphere { .. } => "HemisphereError",
            Error::NonConvergence { .. } => "NonConvergenceError",
            Error::AmbiguousProjection { .. } => "AmbiguousProjectionError",
            Error::Separation { .. } => "SeparationError",
            Error::EndOfFlow { .. } => "EndOfFlowError",
            Error::ZeroSpread => "ZeroSpreadError",
            Error::LengthMismatch { .. } => "LengthMismatchError",
            Error::Inseparable { .. } => "InseparableError",
            Error::InvalidParameter(_) => "InvalidParameterError",
            Error::InvalidCurve(_) => "InvalidCurveError",
            Error::Parse { .. } => "ParseError",
            Error::Normalization { .. } => "NormalizationError",
            Error::Io(_) => "IOError",
        }
    }

    pub(crate) fn with_index(self, i: usize) -> Self {
        match self {
            Error::DegenerateSpectrum {
                lambda1, lambda2, ..
            } => Error::DegenerateSpectrum {
                lambda1,
                lambda2,
                index: Some(i),
            },
            other => other,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io.to_string()),
            kind => Error::Parse {
                line,
                message: format!("{kind:?}"),
            },
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
