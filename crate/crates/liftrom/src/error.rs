//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by tensor kernels, system assembly, integration and
/// reduction routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("requested rank {requested} exceeds numerical rank {numerical_rank} of {context}")]
    RankDeficient {
        context: String,
        requested: usize,
        numerical_rank: usize,
    },

    #[error("Newton iteration failed to converge at step {step} (t = {t}): residual {residual:e} after {iterations} iterations")]
    NewtonDiverged {
        step: usize,
        t: f64,
        residual: f64,
        iterations: usize,
    },

    #[error("state became non-finite at step {step} (t = {t})")]
    NonFiniteState { step: usize, t: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty training window: {0}")]
    EmptyWindow(String),

    #[error("unknown quantity of interest '{0}'")]
    UnknownQoi(String),

    #[error("operator budget exceeded in {context}: {required} entries > budget {budget}")]
    BudgetExceeded {
        context: String,
        required: usize,
        budget: usize,
    },

    #[error("linear solve failed: {0}")]
    SingularMatrix(String),

    #[error("layout error: {0}")]
    Layout(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(context: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
            expected,
            got,
        }
    }

    /// True for failures of the numerics (as opposed to bad inputs).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NewtonDiverged { .. }
                | Error::NonFiniteState { .. }
                | Error::NonFinite(_)
                | Error::Domain(_)
                | Error::SingularMatrix(_)
        )
    }
}
