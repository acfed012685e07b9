use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the matching pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: inconsistent descriptor dimension (expected {expected}, found {found})")]
    InconsistentDescriptorDim {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("invalid template: {0}")]
    InvalidTemplate(String),

    #[error("invalid assignment: {0}")]
    InvalidAssignment(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("unsupported model file version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("scene `{0}` has no descriptors")]
    MissingDescriptors(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("assignment space too large for enumeration ({0} states)")]
    TooLarge(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{0}")]
    Internal(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
