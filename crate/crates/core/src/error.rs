use std::path::PathBuf;

use thiserror::Error;

use crate::providers::ProviderError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("rejected input at index {index}: {reason}")]
    RejectedInput { index: usize, reason: String },

    #[error("snapshot schema version {found} is not supported (expected {expected})")]
    Version { found: u64, expected: u64 },

    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),

    #[error("corrupt model file: {0}")]
    CorruptModel(String),

    #[error("invalid score {value} for pair ({source_tag}, {target_tag})")]
    InvalidScore {
        source_tag: u32,
        target_tag: u32,
        value: f64,
    },

    #[error("tag {0} is not part of the cover set")]
    UnknownTag(u32),

    #[error("shape mismatch: expected {expected}, got {found}")]
    Shape { expected: usize, found: usize },

    #[error("item {0} has no semantic embedding")]
    MissingFeature(u32),

    #[error("user {0} has an empty history (cold start is unsupported)")]
    ColdStart(u64),

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    TrainingDiverged { epoch: usize, loss: f64 },

    #[error("ingest error at {file}:{line}: {reason}")]
    Ingest {
        file: String,
        line: usize,
        reason: String,
    },

    #[error("split error: {0}")]
    Split(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("experiment failed on seed {seed}: {source}")]
    Experiment {
        seed: u64,
        #[source]
        source: Box<Error>,
        partial: Box<crate::eval::ExperimentResult>,
    },

    #[error(transparent)]
    Provider(#[from] ProviderError),

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
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
