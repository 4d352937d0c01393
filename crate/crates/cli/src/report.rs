//! Reports and their files: a JSON summary, the main table and long-format plot data.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::config::Format;
use crate::CliError;

/// Largest residual of one named check against its tolerance.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub max_residual: f64,
    pub tolerance: f64,
    /// Where the first violation happened, e.g. `r = 1.0e-3`.
    pub first_failure: Option<String>,
}

impl Check {
    pub fn pass(&self) -> bool {
        self.max_residual <= self.tolerance
    }
}

/// Rows of numbers under named columns.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub experiment: String,
    pub checks: Vec<Check>,
    /// Messages for checks that could not be evaluated at all.
    pub errors: Vec<String>,
    pub table: Table,
    /// Name of the abscissa of the plot data.
    pub plot_x: String,
    /// `(quantity, x, value)`.
    pub plot: Vec<(String, f64, f64)>,
    /// Echo of the configuration, written into the summary.
    pub parameters: Value,
}

impl Report {
    pub fn new(experiment: &str, plot_x: &str) -> Self {
        Self {
            experiment: experiment.into(),
            checks: Vec::new(),
            errors: Vec::new(),
            table: Table::default(),
            plot_x: plot_x.into(),
            plot: Vec::new(),
            parameters: Value::Null,
        }
    }

    /// Folds `residual` into the named check. NaN counts as a failure.
    pub fn record(&mut self, name: &str, residual: f64, tolerance: f64, at: impl FnOnce() -> String) {
        let residual = if residual.is_nan() { f64::INFINITY } else { residual };
        let idx = match self.checks.iter().position(|c| c.name == name) {
            Some(i) => i,
            None => {
                self.checks.push(Check { name: name.into(), max_residual: 0.0, tolerance, first_failure: None });
                self.checks.len() - 1
            }
        };
        let c = &mut self.checks[idx];
        c.max_residual = c.max_residual.max(residual);
        if residual > c.tolerance && c.first_failure.is_none() {
            c.first_failure = Some(at());
        }
    }

    pub fn pass(&self) -> bool {
        self.errors.is_empty() && self.checks.iter().all(Check::pass)
    }

    /// A one-line description of the first failing check.
    pub fn first_failure(&self) -> Option<String> {
        if let Some(e) = self.errors.first() {
            return Some(e.clone());
        }
        self.checks.iter().find(|c| !c.pass()).map(|c| {
            let at = c.first_failure.as_deref().map(|s| format!(" at {s}")).unwrap_or_default();
            format!("{}: residual {:.3e} exceeds tolerance {:.3e}{at}", c.name, c.max_residual, c.tolerance)
        })
    }

    pub fn summary_json(&self) -> Value {
        let checks: Vec<Value> = self
            .checks
            .iter()
            .map(|c| {
                json!({
                    "name": c.name,
                    "max_residual": finite(c.max_residual),
                    "tolerance": c.tolerance,
                    "pass": c.pass(),
                    "first_failure": c.first_failure,
                })
            })
            .collect();
        json!({
            "experiment": self.experiment,
            "pass": self.pass(),
            "first_failure": self.first_failure(),
            "checks": checks,
            "errors": self.errors,
            "parameters": self.parameters,
        })
    }
}

fn finite(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(format!("{x}"))
    }
}

/// Fixed scientific formatting with 17 significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io { path: path.to_path_buf(), source: e }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Io { path: path.to_path_buf(), source: std::io::Error::other(e.to_string()) }
}

pub fn write_table(table: &Table, path: &Path, format: Format) -> Result<(), CliError> {
    let file = File::create(path).map_err(io_err(path))?;
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(BufWriter::new(file));
            w.write_record(&table.columns).map_err(csv_err(path))?;
            for row in &table.rows {
                w.write_record(row.iter().map(|x| fmt_float(*x))).map_err(csv_err(path))?;
            }
            w.flush().map_err(io_err(path))?;
        }
        Format::Json => {
            let rows: Vec<Value> = table
                .rows
                .iter()
                .map(|r| Value::Object(table.columns.iter().cloned().zip(r.iter().map(|x| finite(*x))).collect()))
                .collect();
            let mut w = BufWriter::new(file);
            serde_json::to_writer_pretty(&mut w, &rows).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e.into() })?;
            w.write_all(b"\n").map_err(io_err(path))?;
        }
    }
    Ok(())
}

/// Long-format `(x, quantity, value)` rows sorted by quantity, then x.
pub fn emit_plotdata(report: &Report, path: &Path) -> Result<(), CliError> {
    let mut rows = report.plot.clone();
    rows.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record([report.plot_x.as_str(), "quantity", "value"]).map_err(csv_err(path))?;
    for (q, x, v) in rows {
        w.write_record([fmt_float(x), q, fmt_float(v)]).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Writes `summary.json`, `<experiment>.csv|json` and `plotdata.csv` into `dir`.
pub fn write_all(report: &Report, dir: &Path, format: Format) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let summary = dir.join("summary.json");
    let text = serde_json::to_string_pretty(&report.summary_json()).expect("serializable") + "\n";
    std::fs::write(&summary, text).map_err(io_err(&summary))?;
    let ext = match format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    let table = dir.join(format!("{}.{ext}", report.experiment));
    write_table(&report.table, &table, format)?;
    let plot = dir.join("plotdata.csv");
    emit_plotdata(report, &plot)?;
    Ok(vec![summary, table, plot])
}
