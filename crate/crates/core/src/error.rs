use std::fmt;

use crate::types::SampleId;

/// A single violated configuration constraint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigViolation {
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for ConfigViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {}", join_violations(.0))]
    InvalidConfig(Vec<ConfigViolation>),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("latent utility MAP did not converge after {iterations} Newton steps (gradient norm {grad_norm:e})")]
    NotConverged {
        iterations: usize,
        grad_norm: f64,
        last: Vec<f64>,
    },

    #[error("kernel matrix is numerically singular even with jitter {jitter:e}")]
    Singular { jitter: f64 },

    #[error("degenerate pattern: coefficient vector has no non-zero entries")]
    DegeneratePattern,

    #[error("stale submission: display token {given} does not match pending token {expected}")]
    StaleSubmission { given: u64, expected: u64 },

    #[error("malformed submission: {0}")]
    InvalidSubmission(String),

    #[error("unknown sample {0}")]
    UnknownSample(SampleId),

    #[error("no ranking has been submitted yet")]
    NoRanking,

    #[error("session already finished")]
    Finished,

    #[error("config file: {0}")]
    ConfigFile(String),

    #[error("transcript: {0}")]
    Transcript(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn join_violations(v: &[ConfigViolation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
