use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the topic-model library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("empty document")]
    EmptyDocument,

    #[error("invalid vocabulary: {0}")]
    Vocabulary(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unlabeled corpus: {0}")]
    Unlabeled(String),

    #[error("model file: {0}")]
    Format(String),

    /// Non-finite values appeared during optimization.
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by diverging optimization rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
