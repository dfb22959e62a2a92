use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid dimension {0}")]
    InvalidDimension(i64),

    #[error("dimension mismatch: domain has dimension {expected}, point has {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The slab parameter `a / sqrt(1 - a^2)` left `[0, 1)` while unfolding
    /// the slab recursion.
    #[error("slab parameter {value} is not below 1 at recursion level d={dim}")]
    ParameterOverflow { dim: usize, value: f64 },

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("degenerate survival curve: {0}")]
    DegenerateCurve(String),

    #[error("fit window: {0}")]
    FitWindow(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("sparse factorization failed: {0}")]
    Factorization(String),
}

impl Error {
    /// Errors raised by a numerical engine at run time, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::InsufficientSamples(_)
                | Error::DegenerateCurve(_)
                | Error::FitWindow(_)
                | Error::Convergence { .. }
                | Error::Factorization(_)
                | Error::ParameterOverflow { .. }
        )
    }
}
