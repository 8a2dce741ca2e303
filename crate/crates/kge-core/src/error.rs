//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}:{line}: malformed triplet line: {reason}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("id {id} out of range (< {bound} expected)")]
    IdOutOfRange { id: u64, bound: u64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("partition error: {0}")]
    Partition(String),

    #[error("wire protocol error: {0}")]
    Protocol(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("barrier timeout: workers {0:?} did not arrive")]
    BarrierTimeout(Vec<usize>),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
