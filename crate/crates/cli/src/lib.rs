//! Command-line experiment runner for `sdeproj`: configuration parsing,
//! validation and deterministic CSV output.

pub mod config;
pub mod error;
pub mod run;

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::CliError;
pub use run::{resolve_output_dir, run, RunOptions, RunSummary, OUTPUT_ENV};
