use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SplatError {
    #[error("non-finite {what} at primitive {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite loss at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("cached-group exclusion violated at iteration {iteration}: {detail}")]
    CachedExclusion { iteration: usize, detail: String },

    #[error("malformed PLY: {0}")]
    Ply(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl SplatError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SplatError::Io { path: path.into(), source }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        SplatError::Csv { path: path.into(), source }
    }
}

pub type Result<T, E = SplatError> = std::result::Result<T, E>;
