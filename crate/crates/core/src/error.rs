use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by estimators, solvers and the experiment harness.
#[derive(Debug, Error)]
pub enum BooError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(&'static str),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("solver did not converge after {iterations} iterations (gradient norm {grad_norm:e})")]
    NotConverged { iterations: usize, grad_norm: f64 },

    #[error("estimator is in a failed state: {0}")]
    Failed(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl BooError {
    /// True for errors that come from numerical breakdown rather than bad
    /// input or IO.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            BooError::NonFinite(_)
                | BooError::NotPositiveDefinite(_)
                | BooError::Singular(_)
                | BooError::NotConverged { .. }
                | BooError::Failed(_)
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        BooError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, BooError>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(BooError::DimensionMismatch { expected, got });
    }
    Ok(())
}
