use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("configuration conflicts with checkpoint: {0}")]
    ConfigConflict(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Training produced a non-finite loss or gradient.
    #[error("training diverged at epoch {epoch}, batch {batch} (global step {global_step}): {detail}")]
    Divergence {
        epoch: usize,
        batch: usize,
        global_step: usize,
        detail: String,
    },

    #[error("manifest {path}: row {row}: {detail}")]
    ManifestRow {
        path: PathBuf,
        row: usize,
        detail: String,
    },

    #[error("manifest {path}: {detail}")]
    Manifest { path: PathBuf, detail: String },

    #[error("duplicate sample id {0:?}")]
    DuplicateId(String),

    #[error("image {path}: {detail}")]
    Image { path: PathBuf, detail: String },

    #[error("checkpoint member {member:?}: {detail}")]
    Checkpoint { member: String, detail: String },

    #[error("evaluation needs both classes: {0}")]
    SingleClass(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
