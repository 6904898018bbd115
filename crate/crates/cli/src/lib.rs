//! Experiment orchestration for the disordered-lattice spectral laboratory.
//!
//! An experiment is a fully resolved [`config::ExperimentConfig`]; running
//! it executes independent disorder realizations in parallel, merges the
//! per-realization measures in a fixed order, writes CSV/JSON data files
//! plus a manifest, and returns the manifest. Outputs are a pure function
//! of `(config, seed)`: worker count and scheduling never change a byte.

use thiserror::Error;

pub mod config;
pub mod manifest;
pub mod runner;

pub use config::{ExperimentConfig, ExperimentKind};
pub use manifest::RunManifest;
pub use runner::run_experiment;

#[derive(Debug, Error)]
pub enum RunError {
    /// Invalid configuration or usage; exit code 1.
    #[error("config error: {0}")]
    Config(String),

    /// Numerical failure during a run; exit code 2.
    #[error("numerical failure{}: {source}", realization_label(.realization))]
    Numerical {
        realization: Option<u64>,
        #[source]
        source: ilac_core::CoreError,
    },

    /// Filesystem failure; exit code 2.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn realization_label(realization: &Option<u64>) -> String {
    match realization {
        Some(r) => format!(" at realization {r}"),
        None => String::new(),
    }
}

impl RunError {
    /// Process exit code for this error class (3 is reserved for
    /// verification failures, which are not errors).
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 1,
            _ => 2,
        }
    }

    pub(crate) fn numerical(source: ilac_core::CoreError) -> Self {
        RunError::Numerical { realization: None, source }
    }

    pub(crate) fn at_realization(realization: u64, source: ilac_core::CoreError) -> Self {
        RunError::Numerical { realization: Some(realization), source }
    }
}

/// Exit code signalling a failed verification (an inequality that was
/// expected to hold did not).
pub const EXIT_VERIFICATION_FAILED: i32 = 3;
