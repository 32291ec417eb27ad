use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum PufError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("no positions left to compare (every cell is masked)")]
    NothingToCompare,

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("operation requires a {expected} code, got {actual}")]
    WrongFamily {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("scheme {scheme} is not supported for {family} codes")]
    UnsupportedScheme {
        scheme: &'static str,
        family: &'static str,
    },

    #[error("challenge has {stable} stable cells, {budget} requested")]
    InsufficientStableCells { stable: usize, budget: usize },

    #[error("unknown address {0}")]
    UnknownAddress(u64),

    #[error("empty read list")]
    EmptyReads,

    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PufError {
    pub(crate) fn format(what: &'static str, reason: impl Into<String>) -> Self {
        PufError::Format {
            what,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, PufError>;
