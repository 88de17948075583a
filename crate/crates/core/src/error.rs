use std::io;

use thiserror::Error;

use crate::ingest::InvariantError;

/// Errors reading or writing the text logs (observation log and
/// ground-truth sidecar).
#[derive(Debug, Error)]
pub enum LogError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {source}")]
    Invariant {
        line: usize,
        #[source]
        source: InvariantError,
    },
    #[error("missing header record")]
    MissingHeader,
}
