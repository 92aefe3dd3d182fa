//! Experiment runner for `lfms-core`: configuration files, subcommands,
//! CSV and SVG outputs with a content-hashed run manifest.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod svg;

pub use commands::{run, Cli, Command, RunReport};
pub use config::{load_config, ConfigError, ExperimentConfig, SEED_ENV};
pub use error::CliError;
