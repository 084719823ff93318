use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index} out of range for {what} of size {size}")]
    Index {
        what: &'static str,
        index: usize,
        size: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("no valid action in state {state}")]
    NoValidAction { state: usize },

    #[error("enumeration refused: {size} states exceeds cap {cap}")]
    EnumerationCap { size: usize, cap: usize },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("bound precondition violated: {0}")]
    Precondition(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn index(what: &'static str, index: usize, size: usize) -> Self {
        Error::Index { what, index, size }
    }
}
