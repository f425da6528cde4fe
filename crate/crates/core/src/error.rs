use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the dictionary construction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("unknown feature `{0}` in frozen index")]
    UnknownFeature(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unresolvable seeds: {}", .0.join(", "))]
    UnresolvedSeeds(Vec<String>),

    #[error("seed `{0}` is listed as both positive and negative")]
    ConflictingSeed(String),

    #[error("malformed BIO sequence in sentence {sentence}: {message}")]
    MalformedTags { sentence: usize, message: String },

    #[error("alignment mismatch: {0}")]
    Alignment(String),

    #[error("invalid configuration:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
