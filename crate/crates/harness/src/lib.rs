//! Experiment configs, benchmark suites and result files for `spikeforce`.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod record;
pub mod suites;

pub use config::{ExperimentConfig, Overrides};
pub use error::{HarnessError, Result};
pub use suites::{BenchOptions, Suite};
