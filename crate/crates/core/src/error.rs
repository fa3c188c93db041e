//! Error type shared across the library.

use thiserror::Error;

/// Errors raised by corpus loading, network construction, PPR computation,
/// model training, and serialization.
///
/// The first three variants indicate bad input (a CLI maps them to exit
/// code 1); the remainder are runtime failures (exit code 2).
#[derive(Debug, Error)]
pub enum Error {
    /// A structured input file could not be parsed.
    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// Input data violates a documented invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// A parameter lies outside its documented range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Training diverged or produced non-finite values.
    #[error("training failure: {0}")]
    Training(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Prefix the error message with surrounding context (e.g. the
    /// co-training iteration), preserving the variant where possible.
    pub fn with_context(self, context: &str) -> Error {
        match self {
            Error::Parse { path, line, message } => Error::Parse {
                path,
                line,
                message: format!("{context}: {message}"),
            },
            Error::Validation(m) => Error::Validation(format!("{context}: {m}")),
            Error::Parameter(m) => Error::Parameter(format!("{context}: {m}")),
            Error::Training(m) => Error::Training(format!("{context}: {m}")),
            other => Error::Training(format!("{context}: {other}")),
        }
    }

    /// True for errors caused by invalid input rather than runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. } | Error::Validation(_) | Error::Parameter(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
