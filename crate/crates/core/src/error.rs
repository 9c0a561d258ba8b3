use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the laboratory pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("split failed: identities {identities:?} have too few records (need {required})")]
    Split { identities: Vec<u32>, required: usize },

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("descriptor extraction failed: {0}")]
    Extraction(String),

    #[error("fitting failed: {0}")]
    Fitting(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("extractor failed on input {index}: {message}")]
    Benchmark { index: usize, message: String },

    #[error("inconsistent report: {0}")]
    Consistency(String),

    #[error("i/o error on {path}: {source}")]
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

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(expected: usize, actual: usize) -> Self {
        Error::Shape { expected, actual }
    }
}
