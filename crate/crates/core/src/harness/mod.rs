//! Config-driven experiment runner behind the `nclp` binary.

pub mod config;
pub mod run;

pub use config::{parse_config, ConfigErrors, ExperimentConfig};
pub use run::{emit_fixtures, read_config, run_experiment, Command, HarnessError, Summary};
