use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("arity mismatch: expected {expected}, found {found}")]
    Arity { expected: usize, found: usize },

    #[error("index {index} out of range 1..={bound}")]
    Index { index: usize, bound: usize },

    #[error("parse error at line {line}, column {col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },

    #[error("invalid chart: {0}")]
    InvalidChart(String),

    #[error("connection has torsion: {0}")]
    Torsion(String),

    #[error("form is not d_E-closed: d_E = {0}")]
    NotClosed(String),

    #[error("{0}")]
    Rejected(String),

    #[error("truncation mismatch: {0}")]
    Truncation(String),

    #[error("insufficient truncation ({0}); raise T/L")]
    InsufficientTruncation(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("internal consistency failure: {0}")]
    Internal(String),

    #[error("{0}")]
    Input(String),
}

impl Error {
    /// True for errors caused by bad user input rather than a failed check.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Internal(_) | Error::InsufficientTruncation(_))
    }
}
