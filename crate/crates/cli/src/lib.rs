//! Configuration-driven experiment runner for `burgers-lab`.

// `!(x > 0.0)` style checks reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod config;
pub mod run;
pub mod table;

use thiserror::Error;

pub use config::{Experiment, ExperimentConfig};
pub use run::{run_experiment, run_with_threads};
pub use table::{write_atomic, ResultTable, Row, Status};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config `{key}`: {reason}")]
    ConfigInvalid { key: String, reason: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ConfigInvalid { .. } => 2,
            CliError::Io(_) => 1,
        }
    }
}

/// Exit code for a finished table: 0 when every row converged, 3 otherwise.
pub fn table_exit_code(t: &ResultTable) -> i32 {
    if t.failed() + t.unconverged() > 0 {
        3
    } else {
        0
    }
}
