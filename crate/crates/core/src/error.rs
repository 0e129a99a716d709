//! Error type shared across the crate.

use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Tensor or image dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A parameter violated its documented range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A NaN or infinity appeared where only finite values are allowed.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// Invalid run configuration (empty dataset, bad fraction, ...).
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Image stream could not be decoded.
    #[error("decode error at {path}: {reason}")]
    Decode { path: PathBuf, reason: String },

    /// JSON interchange file is malformed.
    #[error("parse error: {0}")]
    Parse(String),

    /// Checkpoint is corrupt or from an unknown version.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Scene generation could not place an object within the overlap budget.
    #[error("placement error: {0}")]
    Placement(String),

    /// A pipeline stage failed; carries the stage name.
    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: &str) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}
