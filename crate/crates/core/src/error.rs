//! Crate-wide error type.

use std::path::PathBuf;

/// Errors surfaced by the pipeline library.
#[derive(Debug, thiserror::Error)]
pub enum CoreError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed record: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("invalid data: {0}")]
    Invalid(String),

    #[error("question {question} has no usable gold path")]
    MissingGoldPath { question: String },

    #[error("question {question}: {msg}")]
    BrokenGoldPath { question: String, msg: String },

    #[error("no candidates to rerank")]
    EmptyCandidates,

    #[error("knowledge type {0} is not generated by this operation")]
    UnsupportedKnowledgeType(String),

    #[error("cloze probing requires a single triple with an unmasked object")]
    ClozeNeedsObject,

    #[error("type catalog is empty")]
    EmptyCatalog,

    #[error("entity-relation extraction failed for question {question}: {msg}")]
    ExtractionFailed { question: String, msg: String },

    #[error("backend request failed{}: {msg}", if *.retryable { " (after retries)" } else { "" })]
    Backend { msg: String, retryable: bool },

    #[error("backend response could not be decoded: {payload}")]
    Decode { payload: String },

    #[error("index is not trained")]
    Untrained,

    #[error("insufficient training data: have {have} vectors, need at least {need}")]
    InsufficientTrainingData { have: usize, need: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid vector: {0}")]
    InvalidVector(String),

    #[error("index file {path} is not readable as an index: {msg}")]
    IndexFormat { path: PathBuf, msg: String },
}

impl CoreError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures worth surfacing as "the model backend broke" rather
    /// than "the inputs are wrong".
    pub fn is_backend(&self) -> bool {
        matches!(self, CoreError::Backend { .. } | CoreError::Decode { .. })
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
