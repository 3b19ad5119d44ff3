use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty corpus")]
    EmptyCorpus,

    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty class document for class {0}")]
    EmptyClassDocument(usize),

    #[error("zero document frequency for token {0}")]
    ZeroDocumentFrequency(u32),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("document of length {len} exceeds maximum length {max}")]
    InputTooLong { len: usize, max: usize },

    #[error("wrong mask kind: expected {expected}, got {actual}")]
    WrongMaskKind {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("training diverged at step {step}: loss = {loss}")]
    Divergence { step: usize, loss: f64 },

    #[error("evaluation needs at least one in-distribution and one out-of-distribution sample")]
    OneSided,

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
