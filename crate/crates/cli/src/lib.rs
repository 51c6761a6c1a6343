//! Experiment runner for the `mfg-lab` solvers: TOML configuration, the six
//! experiment kinds, validation, and deterministic run directories.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod output;
pub mod run;
pub mod study;
pub mod validate;

pub use config::{ExperimentConfig, Kind, LoadedConfig};
pub use error::CliError;
pub use run::{run, RunOptions, RunOutcome};
pub use validate::{validate, ValidationReport};
