use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum FcError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("inner solver stopped after {iterations} iterations without stationarity (best penalty {best_value:e})")]
    Convergence {
        iterations: usize,
        best_value: f64,
        best_point: Vec<f64>,
    },

    #[error("degenerate penalty value {0:e}")]
    DegeneratePenalty(f64),

    #[error("inapplicable: {0}")]
    Inapplicable(String),

    #[error("step size: {0}")]
    StepSize(String),

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("accuracy: {0}")]
    Accuracy(String),
}

pub type Result<T> = std::result::Result<T, FcError>;

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(FcError::DimensionMismatch { expected, found })
    }
}
