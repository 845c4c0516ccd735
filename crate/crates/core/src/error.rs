use thiserror::Error;

/// Errors raised while loading data, building estimating equations or solving them.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error at line {line}: {message}")]
    Data { line: usize, message: String },

    #[error("data error: {0}")]
    Invalid(String),

    #[error("positivity violated for unit {unit}: call-{call} propensity {value:e} outside (1e-10, 1-1e-10)")]
    Positivity { unit: usize, call: usize, value: f64 },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("singular matrix (condition number {condition:e})")]
    Singular { condition: f64 },

    #[error("identification failure: {0}")]
    Identification(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
