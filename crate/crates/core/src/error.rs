use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value breaks an operation's contract.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// The angle to a zero vector is undefined.
    #[error("point {index} has zero norm; angular separation is undefined")]
    ZeroNorm { index: usize },

    #[error("dataset is not separated: {0}")]
    NotSeparated(String),

    #[error("could not place {requested} points: accepted {accepted} before exhausting {attempted} rejections")]
    Infeasible {
        requested: usize,
        accepted: usize,
        attempted: usize,
    },

    #[error("{step}: no valid sample after {attempts} attempts ({detail})")]
    RetriesExhausted {
        step: &'static str,
        attempts: usize,
        detail: String,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    /// The construction produced a network that does not satisfy its own
    /// contract. Always a bug.
    #[error("internal invariant breached: {0}")]
    InvariantBreach(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }
}
