use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PithError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// No usable local orientation survived sampling.
    #[error("detection failed: {0}")]
    DetectionFailed(String),

    #[error("PClines filtering failed: no converging cluster found")]
    FilteringFailed,

    /// The query point coincides with a segment midpoint; the gradient is undefined there.
    #[error("singular point: query coincides with segment midpoint {index}")]
    Singular { index: usize },

    #[error("{}: {error}", path.display())]
    Io { path: PathBuf, error: std::io::Error },

    #[error("{}: {error}", path.display())]
    Image { path: PathBuf, error: image::ImageError },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("{path}:{line}: {message}")]
    Config {
        path: String,
        line: usize,
        message: String,
    },
}

pub type Result<T, E = PithError> = std::result::Result<T, E>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(PithError::InvalidInput(msg.into()))
}
