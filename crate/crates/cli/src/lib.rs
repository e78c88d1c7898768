//! Experiment harness on top of `aoii-core`: configuration parsing and the
//! subcommands behind the `aoii` binary.

pub mod commands;
pub mod config;
pub mod error;

pub use config::ExperimentConfig;
pub use error::CliError;
