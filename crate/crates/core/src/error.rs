use std::path::PathBuf;

use thiserror::Error;

use crate::validate::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("inputs rejected: {0}")]
    Rejected(ValidationReport),

    #[error("detection {local_index} at frame {frame} has no tracker id")]
    MissingTrackerId { frame: usize, local_index: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("inconsistent evidence at frame {frame}: no probability mass left")]
    InconsistentEvidence { frame: usize },

    #[error("rwid {rwid}: {source}")]
    Rwid {
        rwid: String,
        #[source]
        source: Box<Error>,
    },

    #[error("enumeration bound exceeded: {0}")]
    BoundExceeded(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable kind, used by the CLI's one-line error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::Rejected(_) => "rejected",
            Error::MissingTrackerId { .. } => "missing_tracker_id",
            Error::Shape(_) => "shape",
            Error::InconsistentEvidence { .. } => "inconsistent_evidence",
            Error::Rwid { source, .. } => source.kind(),
            Error::BoundExceeded(_) => "bound_exceeded",
            Error::Parse { .. } => "parse",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
