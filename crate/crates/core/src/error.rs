use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("ill-conditioned system (condition estimate {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("AUC undefined: need at least one active and one inactive consumer")]
    UndefinedAuc,

    #[error("every grid point failed for {method}")]
    AllGridPointsFailed { method: String },

    #[error("empty input: {0}")]
    Empty(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
