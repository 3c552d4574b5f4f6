use std::path::PathBuf;

use thiserror::Error;

use crate::dataset::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid manifest: {}", format_violations(.0))]
    InvalidManifest(Vec<Violation>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing input file {path} (produced by `{producer}`)")]
    MissingInput { path: PathBuf, producer: &'static str },

    #[error("{path}: malformed JSON: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: image error: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    CheckpointVersion { found: u8, expected: u8 },

    #[error("corrupted checkpoint: {0}")]
    CheckpointCorrupt(String),

    #[error("checkpoint hash mismatch: header says {expected}, payload hashes to {found}")]
    CheckpointHash { expected: String, found: String },

    #[error("non-finite loss at epoch {epoch}, step {step} (lr {lr}); the learning rate is probably too high")]
    NonFiniteLoss { epoch: u32, step: usize, lr: f32 },

    #[error("count mismatch: {predictions} predictions for {records} capture records")]
    CountMismatch { predictions: usize, records: usize },
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
