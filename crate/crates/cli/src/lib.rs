//! Experiment runner for the `bergman` binary: TOML configs in, CSV rows and
//! a JSON summary out.

pub mod config;
pub mod run;

pub use config::{validate_config, ConfigError, Experiment, ExperimentConfig};
pub use run::{execute, run_experiment, Artifacts, Outcome, Row, RunError};
