//! Experiment configuration: an optional JSON document overlaid by flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::Deserialize;

use crate::CliError;

pub const EXPERIMENTS: [&str; 6] = ["cp2", "f2", "hyperkahler", "joyce", "hodge-t4", "point-check"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Everything one run needs, after defaults and validation.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: String,
    /// Radial potential for cp2/f2, Hamiltonian preset for joyce; `file:` prefixes a table.
    pub potential: String,
    pub grid_min: f64,
    pub grid_max: f64,
    pub grid_n: usize,
    /// Integration constant c for tabulated potentials.
    pub c: f64,
    /// Deformation parameter: the t-family for cp2/f2, the flow time for joyce.
    pub t: f64,
    /// Additional flow times for the joyce residual sweep.
    pub t_values: Vec<f64>,
    pub resolution: usize,
    pub count: usize,
    pub seed: u64,
    pub tolerances: Tolerances,
    pub out_dir: PathBuf,
    pub format: Format,
}

/// Per-check tolerance overrides.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Tolerances {
    /// Replaces every default when set.
    pub all: Option<f64>,
    pub by_name: BTreeMap<String, f64>,
}

impl Tolerances {
    pub fn get(&self, name: &str, default: f64) -> f64 {
        self.by_name.get(name).copied().or(self.all).unwrap_or(default)
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    experiment: Option<String>,
    potential: Option<String>,
    grid_min: Option<f64>,
    grid_max: Option<f64>,
    grid_n: Option<usize>,
    c: Option<f64>,
    t: Option<f64>,
    t_values: Option<Vec<f64>>,
    resolution: Option<usize>,
    count: Option<usize>,
    seed: Option<u64>,
    tol: Option<f64>,
    tolerances: Option<BTreeMap<String, f64>>,
    out_dir: Option<PathBuf>,
    format: Option<Format>,
}

/// Command line. Flags override values from `--config`.
#[derive(Debug, Parser)]
#[command(name = "genkahler", version, about = "Run a named generalized Kähler experiment and report residuals")]
pub struct Args {
    /// Experiment: cp2, f2, hyperkahler, joyce, hodge-t4 or point-check.
    #[arg(value_name = "EXPERIMENT")]
    pub name: Option<String>,
    #[arg(long)]
    pub experiment: Option<String>,
    /// JSON configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// fubini-study, flat, hirzebruch, quartic or file:PATH for cp2/f2;
    /// quadratic, linear or bump for joyce.
    #[arg(long)]
    pub potential: Option<String>,
    #[arg(long)]
    pub grid_min: Option<f64>,
    #[arg(long)]
    pub grid_max: Option<f64>,
    #[arg(long)]
    pub grid_n: Option<usize>,
    /// Tolerance for every check (`1e-9`) or for one check (`round_trip=1e-9`); repeatable.
    #[arg(long)]
    pub tol: Vec<String>,
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    /// Grid points per axis for joyce and hodge-t4.
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Number of random samples for hodge-t4 and point-check.
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Format of the main table.
    #[arg(long, value_parser = ["csv", "json"])]
    pub format: Option<String>,
}

fn read_file_config(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn parse_tol(spec: &str, tol: &mut Tolerances) -> Result<(), CliError> {
    let bad = || CliError::Config(format!("cannot parse tolerance {spec:?}"));
    match spec.split_once('=') {
        Some((name, v)) => {
            tol.by_name.insert(name.trim().to_string(), v.trim().parse().map_err(|_| bad())?);
        }
        None => tol.all = Some(spec.trim().parse().map_err(|_| bad())?),
    }
    Ok(())
}

impl ExperimentConfig {
    /// Merges the JSON file (if any) with the flags and validates the result.
    pub fn from_args(args: &Args) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(p) => read_file_config(p)?,
            None => FileConfig::default(),
        };
        let experiment = args
            .experiment
            .clone()
            .or_else(|| args.name.clone())
            .or(file.experiment)
            .ok_or_else(|| CliError::Config("no experiment given".into()))?;
        if let (Some(a), Some(b)) = (&args.experiment, &args.name) {
            if a != b {
                return Err(CliError::Config(format!("experiment given twice: {b} and {a}")));
            }
        }
        let default_potential = match experiment.as_str() {
            "f2" => "hirzebruch",
            "joyce" => "quadratic",
            _ => "fubini-study",
        };
        let default_t = if experiment == "joyce" { 0.05 } else { 1.0 };
        let default_resolution = if experiment == "joyce" { 16 } else { 8 };
        let default_count = if experiment == "hodge-t4" { 100 } else { 50 };
        let mut tolerances = Tolerances { all: file.tol, by_name: file.tolerances.unwrap_or_default() };
        for spec in &args.tol {
            parse_tol(spec, &mut tolerances)?;
        }
        let format = match args.format.as_deref() {
            Some("json") => Format::Json,
            Some(_) => Format::Csv,
            None => file.format.unwrap_or(Format::Csv),
        };
        let cfg = Self {
            experiment,
            potential: args.potential.clone().or(file.potential).unwrap_or_else(|| default_potential.into()),
            grid_min: args.grid_min.or(file.grid_min).unwrap_or(1e-3),
            grid_max: args.grid_max.or(file.grid_max).unwrap_or(1e3),
            grid_n: args.grid_n.or(file.grid_n).unwrap_or(200),
            c: args.c.or(file.c).unwrap_or(0.0),
            t: args.t.or(file.t).unwrap_or(default_t),
            t_values: file.t_values.unwrap_or_default(),
            resolution: args.resolution.or(file.resolution).unwrap_or(default_resolution),
            count: args.count.or(file.count).unwrap_or(default_count),
            seed: args.seed.or(file.seed).unwrap_or(0),
            tolerances,
            out_dir: args.out_dir.clone().or(file.out_dir).unwrap_or_else(|| PathBuf::from("out")),
            format,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let err = |m: String| Err(CliError::Config(m));
        if !EXPERIMENTS.contains(&self.experiment.as_str()) {
            return err(format!("unknown experiment {:?}; expected one of {}", self.experiment, EXPERIMENTS.join(", ")));
        }
        if let Some(v) = self.tolerances.all {
            if !(v > 0.0) {
                return err(format!("tolerance {v} must be positive"));
            }
        }
        if let Some((k, v)) = self.tolerances.by_name.iter().find(|(_, v)| !(**v > 0.0)) {
            return err(format!("tolerance {k}={v} must be positive"));
        }
        if !(self.grid_min > 0.0 && self.grid_max > self.grid_min && self.grid_max.is_finite()) {
            return err(format!("grid bounds must satisfy 0 < min < max, got [{}, {}]", self.grid_min, self.grid_max));
        }
        if self.grid_n < 2 {
            return err(format!("grid-n = {} must be at least 2", self.grid_n));
        }
        if !self.t.is_finite() || self.t_values.iter().any(|t| !t.is_finite()) {
            return err("t must be finite".into());
        }
        match self.experiment.as_str() {
            "cp2" | "f2" if !(self.t > 0.0 && self.t <= 1.0) => return err(format!("t = {} must lie in (0, 1]", self.t)),
            "joyce" | "hodge-t4" if self.resolution < 4 => {
                return err(format!("resolution {} must be at least 4", self.resolution))
            }
            "hodge-t4" | "point-check" if self.count == 0 => return err("count must be positive".into()),
            _ => {}
        }
        Ok(())
    }
}
