//! Library surface of the command-line driver: configuration, execution, and
//! benchmark reproduction. The binary in `main.rs` is a thin shell over these.

// validation sites use `!(x > 0.0)` so that NaN fails the check too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod config;
pub mod runner;
pub mod templates;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad configuration or usage; exit code 1.
    #[error("{0}")]
    Validation(String),
    /// Failure while running; exit code 2.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}
