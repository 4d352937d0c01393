//! Batch runner for the genkahler experiments.
//!
//! [`run`] executes one named pipeline, writes `summary.json`, the main table
//! and `plotdata.csv`, and returns the [`Report`]. Exit codes: 0 when every
//! check is within tolerance, 1 on a failed check, 2 on configuration or input errors.

use std::path::PathBuf;

use serde_json::json;

pub mod config;
pub mod experiments;
pub mod report;

pub use config::{Args, ExperimentConfig, Format, Tolerances};
pub use report::{emit_plotdata, Check, Report, Table};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        2
    }
}

/// Runs the experiment and writes its files into `cfg.out_dir`.
pub fn run(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    cfg.validate()?;
    let mut report = experiments::run_experiment(cfg)?;
    report.parameters = json!({
        "potential": cfg.potential,
        "grid_min": cfg.grid_min,
        "grid_max": cfg.grid_max,
        "grid_n": cfg.grid_n,
        "c": cfg.c,
        "t": cfg.t,
        "t_values": cfg.t_values,
        "resolution": cfg.resolution,
        "count": cfg.count,
        "seed": cfg.seed,
    });
    report::write_all(&report, &cfg.out_dir, cfg.format)?;
    Ok(report)
}
