use std::process::ExitCode;

use clap::Parser;
use genkahler_cli::{run, Args, ExperimentConfig};

fn main() -> ExitCode {
    let args = Args::parse();
    let result = ExperimentConfig::from_args(&args).and_then(|cfg| run(&cfg));
    match result {
        Ok(report) if report.pass() => ExitCode::SUCCESS,
        Ok(report) => {
            eprintln!("{}: {}", report.experiment, report.first_failure().unwrap_or_default());
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("genkahler: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
