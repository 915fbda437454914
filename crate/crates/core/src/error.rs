use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("degenerate geometry: {0}")]
    Geometry(String),

    #[error("operation not applicable: {0}")]
    NotApplicable(String),

    #[error("enumeration budget exceeded: {count} profiles (limit {limit})")]
    BudgetExceeded { count: f64, limit: f64 },

    #[error("invalid configuration key `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("all candidates failed: {0}")]
    AllFailed(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
