use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Two operands whose shapes cannot be combined.
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    /// A precondition of an operation does not hold.
    #[error("{0}")]
    Contract(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// Well-formed input that violates a data invariant (e.g. a non-binary label).
    #[error("invalid data: {0}")]
    Validation(String),

    /// PCC refuses to enumerate label spaces beyond its configured limit.
    #[error(
        "exhaustive inference over 2^{d} label vectors exceeds the limit d_max = {d_max}; \
         cost grows exponentially with the label count"
    )]
    TooManyLabels { d: usize, d_max: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
