use thiserror::Error;

use crate::conllu::TreeViolation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("sentence {sentence}: invalid tree: {violation}")]
    InvalidTree { sentence: usize, violation: TreeViolation },

    #[error("dataset row {row}: {msg}")]
    Dataset { row: usize, msg: String },

    #[error("distance {t} outside [0, {cap}]")]
    Domain { t: u32, cap: u32 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// True for errors caused by bad input or configuration, as opposed to
    /// numeric or internal failures.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::InvalidTree { .. }
                | Error::Dataset { .. }
                | Error::Domain { .. }
                | Error::Config(_)
                | Error::Io { .. }
                | Error::Json { .. }
        )
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { context: context.into(), source }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json { context: context.into(), source }
    }
}
