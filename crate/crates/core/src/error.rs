use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("cannot encode the zero vector")]
    ZeroVector,

    #[error("decoder returned the zero vector")]
    DecodeFailure,

    #[error("brute-force decoder limited to n <= 12 and s <= 2 (got n = {n}, s = {s})")]
    OracleTooLarge { n: usize, s: usize },

    #[error("malformed message: {0}")]
    Wire(String),

    #[error("no connected graph after {attempts} samples with edge probability {edge_prob}; try a higher edge probability")]
    Disconnected { attempts: usize, edge_prob: f64 },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("labels must be binary, found {0}")]
    NonBinaryLabel(f64),

    #[error("config: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
