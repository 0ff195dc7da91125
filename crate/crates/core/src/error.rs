use thiserror::Error;

/// Errors produced while building, evaluating or inverting transport maps.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrimapError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite input at coordinate {index}")]
    NonFinite { index: usize },

    /// `d/dx_k T^k(x) <= 0` for the 1-based component `component`.
    #[error("component {component} is not monotone at {point:?} (partial = {partial:e})")]
    NonMonotoneAtPoint {
        component: usize,
        point: Vec<f64>,
        partial: f64,
    },

    #[error("root of component {component} not bracketed for target value {target:e}")]
    BracketFailure { component: usize, target: f64 },

    #[error("target density is zero (out of support) at {0:?}")]
    TargetOutOfSupport(Vec<f64>),

    #[error("target callback failed: {0}")]
    CallbackFailure(String),

    #[error("solver did not converge: {0}")]
    NonConvergence(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unsupported map file version `{0}`")]
    UnsupportedVersion(String),

    #[error("io error: {0}")]
    Io(String),
}

impl TrimapError {
    /// Short machine-readable code, used in `ERROR <code> <detail>` lines.
    pub fn code(&self) -> &'static str {
        match self {
            TrimapError::InvalidArgument(_) => "invalid-argument",
            TrimapError::DimensionMismatch { .. } => "dimension-mismatch",
            TrimapError::NonFinite { .. } => "non-finite-input",
            TrimapError::NonMonotoneAtPoint { .. } => "non-monotone",
            TrimapError::BracketFailure { .. } => "bracket-failure",
            TrimapError::TargetOutOfSupport(_) => "target-out-of-support",
            TrimapError::CallbackFailure(_) => "callback-failure",
            TrimapError::NonConvergence(_) => "non-convergence",
            TrimapError::Parse { .. } => "parse-error",
            TrimapError::UnsupportedVersion(_) => "unsupported-version",
            TrimapError::Io(_) => "io-error",
        }
    }

    /// Whether the error comes from the numerics rather than from bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            TrimapError::NonMonotoneAtPoint { .. }
                | TrimapError::BracketFailure { .. }
                | TrimapError::TargetOutOfSupport(_)
                | TrimapError::CallbackFailure(_)
                | TrimapError::NonConvergence(_)
        )
    }
}

impl From<std::io::Error> for TrimapError {
    fn from(e: std::io::Error) -> Self {
        TrimapError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, TrimapError>;
