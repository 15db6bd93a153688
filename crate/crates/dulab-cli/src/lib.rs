//! Config-driven experiment runner: one JSON document per run, CSV tables
//! with a JSON sidecar, and the saturated-state comparison table.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod table1;

pub use config::{ExperimentConfig, Overrides};
pub use error::{CliError, CliResult};

use std::path::{Path, PathBuf};

/// Loads, validates and runs one config; returns the files written.
pub fn run_config(path: &Path, ov: &Overrides) -> CliResult<Vec<PathBuf>> {
    let cfg = ExperimentConfig::load(path, ov)?;
    run(&cfg)
}

pub fn run(cfg: &ExperimentConfig) -> CliResult<Vec<PathBuf>> {
    cfg.validate()?;
    let out = experiments::run_experiment(cfg)?;
    output::write_run(cfg, &out)
}
