use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("weights must be non-negative, finite and sum to a positive value")]
    InvalidWeights,

    #[error("graph has no edges; emit zero vectors for its super-nodes instead of training")]
    Edgeless,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("need more than {k} points for k = {k}, found {n}")]
    TooFewPoints { k: usize, n: usize },

    #[error("unknown account `{0}`")]
    UnknownAccount(String),

    #[error("account `{0}` already exists")]
    DuplicateAccount(String),

    #[error("day {day} is earlier than the current day {now}")]
    TimeReversal { day: f64, now: f64 },

    #[error("{path}: {source}")]
    File { path: PathBuf, source: Box<Error> },

    #[error("{stage} stage failed: {source}")]
    Stage { stage: &'static str, source: Box<Error> },
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn in_file(path: &Path, source: Error) -> Self {
        Error::File {
            path: path.to_owned(),
            source: Box::new(source),
        }
    }

    pub(crate) fn in_stage(stage: &'static str, source: Error) -> Self {
        Error::Stage {
            stage,
            source: Box::new(source),
        }
    }

    /// True for failures caused by the input data rather than by the
    /// program. A missing or unreadable input file counts as bad data.
    pub fn is_data_error(&self) -> bool {
        match self {
            Error::Io(e) => matches!(
                e.kind(),
                io::ErrorKind::NotFound | io::ErrorKind::InvalidData | io::ErrorKind::PermissionDenied
            ),
            Error::File { source, .. } | Error::Stage { source, .. } => source.is_data_error(),
            _ => true,
        }
    }
}
