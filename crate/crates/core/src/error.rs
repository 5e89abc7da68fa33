use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("column `{0}` is missing from the header")]
    MissingColumn(String),

    #[error("row {row}: bad value in column `{column}`")]
    BadValue { row: usize, column: String },

    #[error("dataset has no valid rows")]
    EmptyDataset,

    #[error("unknown driver `{0}`")]
    UnknownDriver(String),

    #[error("need at least 2 samples to fit statistics, got {0}")]
    TooFewSamples(usize),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite training loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("objective returned a non-finite value")]
    NonFiniteObjective {
        point: Vec<f64>,
        best: Option<Box<crate::cmaes::CmaesResult>>,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("no driver profiles to match against")]
    EmptyProfiles,

    #[error("unknown behavior dimension `{0}`")]
    UnknownDimension(String),

    #[error("normalization statistics differ between models ({0} vs {1})")]
    StatsMismatch(String, String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    pub fn dims(expected: usize, actual: usize) -> Self {
        Error::DimensionMismatch { expected, actual }
    }

    /// True for errors caused by bad input or configuration rather than by a
    /// numeric failure during computation.
    pub fn is_usage(&self) -> bool {
        !matches!(
            self,
            Error::NonFiniteLoss { .. } | Error::NonFiniteObjective { .. }
        )
    }
}
