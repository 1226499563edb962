//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the semi-anchored pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("invalid argument `{arg}`: {reason}")]
    InvalidArgument { arg: &'static str, reason: String },

    /// Inputs that are individually valid but mutually inconsistent
    /// (e.g. a positive location with no ground truth of its class).
    #[error("inconsistent inputs: {0}")]
    Inconsistent(String),

    /// A malformed annotation file; names the first offending record.
    #[error("annotation error: {0}")]
    Annotation(String),

    /// A malformed or out-of-range run-config entry.
    #[error("config error for key `{key}`: {reason}")]
    Config { key: String, reason: String },

    /// A malformed line-oriented data file (detections, head outputs).
    #[error("parse error in {file} line {line}: {reason}")]
    Parse {
        file: String,
        line: usize,
        reason: String,
    },

    /// A loss or gradient became NaN/Inf.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(arg: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            arg,
            reason: reason.into(),
        }
    }
}
