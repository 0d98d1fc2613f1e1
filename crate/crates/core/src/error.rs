use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("index out of range in {op}: {index} (limit {limit})")]
    Index {
        op: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("checkpoint load failed: {0}")]
    Checkpoint(String),

    #[error("training diverged at epoch {epoch}: {msg}")]
    Diverged { epoch: usize, msg: String },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
