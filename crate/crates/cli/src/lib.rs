//! Batch runner for `qplab` experiments.
//!
//! A TOML config names an experiment kind, the model, the scale schedule and
//! a parameter grid. [`run::run`] evaluates the grid on a worker pool and
//! returns a [`run::Bundle`], which [`run::Bundle::write`] publishes
//! atomically as a directory of JSON and CSV files.

pub mod cache;
pub mod config;
pub mod experiments;
pub mod run;
pub mod suites;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{ExperimentConfig, ExperimentKind, Format};
pub use run::{run, Bundle, RunOptions};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config at `{path}`: {message}")]
    ConfigInvalid { path: String, message: String },
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("grid point {index} failed: {message}")]
    PointFailed { index: usize, message: String },
    #[error("output directory {0} has no parent")]
    BadOutput(PathBuf),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io { context: context.into(), source }
    }
}
