use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the transcription toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid Gardiner code {0:?}")]
    InvalidCode(String),

    #[error("directory name {name:?} is not a valid Gardiner code ({path})")]
    InvalidClassDirectory { name: String, path: PathBuf },

    #[error("no samples found under {0}")]
    NoSamples(PathBuf),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("image is {actual_w}x{actual_h}, expected {expected_w}x{expected_h}")]
    ImageSize {
        expected_w: u32,
        expected_h: u32,
        actual_w: u32,
        actual_h: u32,
    },

    #[error("training diverged: {0}")]
    NonFiniteLoss(String),

    #[error("duplicate key: {0}")]
    DuplicateKey(String),

    #[error("model mismatch: {0}")]
    ModelMismatch(String),

    #[error("unsupported format version {found} (expected {expected})")]
    FormatVersion { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
