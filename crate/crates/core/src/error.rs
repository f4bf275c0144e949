use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("source {source_id}: row {row} sums to {sum:.6}, outside 1 +/- 1e-4")]
    RowSum {
        source_id: String,
        row: usize,
        sum: f64,
    },

    #[error("source {source_id}: row {row} column {col} holds invalid probability {value}")]
    InvalidProbability {
        source_id: String,
        row: usize,
        col: usize,
        value: f32,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("unknown source id {0:?}")]
    UnknownSource(String),

    #[error("unknown metric {0:?}")]
    UnknownMetric(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("{} key(s) missing from performance table: {}", .0.len(), .0.join(", "))]
    MissingKeys(Vec<String>),

    #[error("memory budget of {budget} bytes too small: need at least {needed} bytes")]
    Budget { budget: u64, needed: u64 },

    #[error("refusing to overwrite {} (pass --force)", .0.display())]
    Exists(PathBuf),

    #[error("internal invariant violated: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn dims(what: impl Into<String>, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            what: what.into(),
            expected,
            found,
        }
    }

    /// Process exit code for this error: 1 validation, 2 I/O, 3 internal.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Io { .. } | Error::Exists(_) => 2,
            Error::Internal(_) => 3,
            _ => 1,
        }
    }
}
