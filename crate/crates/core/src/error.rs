use thiserror::Error;

/// Errors raised by the q-calculus primitives, estimators and the simulation harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum QError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("series diverges: |x| = {x} is outside the convergence radius {radius}")]
    DivergentSeries { x: f64, radius: f64 },

    #[error("series truncated after {terms} terms without reaching tolerance (partial value {partial})")]
    TruncationIncomplete { terms: usize, partial: f64 },

    #[error("non-finite function value {value} at x = {x}")]
    NonFiniteEvaluation { x: f64, value: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("kernel is negative ({value}) at u = {u}")]
    PositivityViolation { u: f64, value: f64 },

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("invalid density: Jackson mass {mass} deviates from 1 by more than {tolerance}")]
    InvalidDensity { mass: f64, tolerance: f64 },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for QError {
    fn from(err: std::io::Error) -> Self {
        QError::Io(err.to_string())
    }
}

pub type Result<T, E = QError> = std::result::Result<T, E>;
