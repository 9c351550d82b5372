use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    Shape(String),

    #[error("non-finite value {value} at row {row}, column {col}")]
    NonFinite { row: usize, col: usize, value: f64 },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("{algorithm} did not converge within {cap} iterations")]
    NoConvergence { algorithm: &'static str, cap: usize },

    #[error("generalized eigenpair {index} has residual {residual:e} above {limit:e}")]
    EigenResidual {
        index: usize,
        residual: f64,
        limit: f64,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("empty ID intersection across tables (sizes: {0})")]
    EmptyIntersection(String),

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("zero variance: {0}")]
    ZeroVariance(String),

    #[error("unresolved IDs: {0}")]
    MissingIds(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("{0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: &str, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.to_string(),
            line,
            message: message.into(),
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    /// A non-positive-definite block is blamed on the data.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. } | Error::NonFiniteLoss { .. } | Error::EigenResidual { .. }
        )
    }
}
