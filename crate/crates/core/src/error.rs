use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the enhancement pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate enhancement: {0}")]
    DegenerateEnhancement(String),
    #[error("degenerate reference: {0}")]
    DegenerateReference(String),
    #[error("no active speech")]
    NoActiveSpeech,
    #[error("signal too short: {0}")]
    SignalTooShort(String),
    #[error("insufficient speech material: {0}")]
    InsufficientSpeech(String),
    #[error("compression state: {0}")]
    CompressionState(String),
    #[error("diverged: non-finite value in `{0}`")]
    Diverged(String),
    #[error("variant requires enhanced examples (sample `{0}`)")]
    MissingExamples(String),
    #[error("wav: {0}")]
    Wav(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("unreadable inputs: {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    Unreadable(Vec<PathBuf>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
