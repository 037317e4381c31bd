//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug, Clone)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error(
        "near-duplicate inputs {i} and {j} (distance {dist:.3e}); \
         de-duplicate or perturb the design"
    )]
    DuplicateInputs { i: usize, j: usize, dist: f64 },

    #[error(
        "Cholesky factorization of {what} failed after jitter escalation to {jitter:.3e}; \
         closest input pair ({i}, {j}) at distance {dist:.3e}"
    )]
    FactorizationFailure {
        what: &'static str,
        jitter: f64,
        i: usize,
        j: usize,
        dist: f64,
    },

    #[error("non-finite value in {what}; objective values may overflow the posterior statistics")]
    NonFinite { what: String },

    #[error("posterior derivative scale matrix not positive definite at x* = {x_star:?}")]
    ScaleNotPd { x_star: Vec<f64> },

    #[error(
        "no point of the constrained region found in {tries} uniform draws \
         (region: {region}); enlarge epsilon or provide an explicit init"
    )]
    InitSearchFailed { tries: u64, region: String },

    #[error("stage {stage} failed: {reason}")]
    StageFailure { stage: usize, reason: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
