use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = PrimeError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum PrimeError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("geometry error: {0}")]
    Geometry(String),

    /// A required column is absent from a table header.
    #[error("missing required column `{column}`")]
    MissingColumn { column: String },

    /// Input data violates a table-level invariant (duplicates, bad populations, ...).
    #[error("data error: {0}")]
    Data(String),

    /// A caller-supplied parameter is out of its domain.
    #[error("invalid `{field}`: {message}")]
    InvalidParameter { field: String, message: String },

    #[error("unknown hazard type `{0}`")]
    UnknownHazardType(String),

    #[error("key sets differ: {0:?}")]
    KeyMismatch(Vec<String>),

    #[error("design matrix is rank deficient; dependent columns: {0:?}")]
    RankDeficient(Vec<String>),

    #[error("lasso did not converge after {iterations} iterations (max change {max_change:.3e}, duality gap {gap:.3e})")]
    NotConverged {
        iterations: usize,
        max_change: f64,
        gap: f64,
    },

    #[error("{0}")]
    Empty(String),
}

impl PrimeError {
    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        PrimeError::InvalidParameter {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PrimeError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by caller parameters rather than by input data.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            PrimeError::InvalidParameter { .. } | PrimeError::UnknownHazardType(_)
        )
    }
}
