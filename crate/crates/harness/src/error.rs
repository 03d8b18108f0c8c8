use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] mergebo_core::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("suite construction: {0}")]
    Suite(String),

    #[error("render budget overrun: {method} used {used} of {budget}")]
    Budget { method: String, used: usize, budget: usize },

    #[error("{0}")]
    Usage(String),
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
