use thiserror::Error;

/// Errors produced by the extraction, metrics and modelling stages.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("time {t} outside record span [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("host record does not cover radar time {0}")]
    Synchronization(f64),

    #[error("internal consistency: {0}")]
    Consistency(String),

    #[error("invalid event: {0}")]
    InvalidEvent(String),

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("infeasible encounter: {0}")]
    Infeasible(String),

    #[error("schema error: missing required column `{0}`")]
    Schema(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

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

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
