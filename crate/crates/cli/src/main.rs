use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use mckeanflow::config::Experiment;
use mckeanflow::error::CliError;
use mckeanflow::experiments::{self, Outcome, RunOptions};

/// Numerical experiments on mean-field free-energy flows with several
/// stationary states.
#[derive(Parser, Debug)]
#[command(name = "mckeanflow", version)]
struct Cli {
    experiment: Experiment,
    /// JSON experiment config
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config's "output")
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for seed and parameter sweeps
    #[arg(long, env = "MCKEANFLOW_THREADS", default_value_t = 1)]
    threads: usize,
    #[arg(long)]
    verbose: bool,
}

fn run(cli: &Cli) -> Result<Outcome, CliError> {
    if cli.experiment == Experiment::List {
        print!("{}", experiments::catalog());
        return Ok(Outcome::Success);
    }
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    if cli.threads == 0 {
        return Err(CliError::Config("--threads must be at least 1".into()));
    }
    let opts = RunOptions { out: cli.out.clone(), threads: cli.threads, verbose: cli.verbose };
    experiments::run(cli.experiment, &text, &opts)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::CertificateInvalid) => {
            eprintln!("error kind=certificate code=4 message=\"certificate verdict INVALID\"");
            ExitCode::from(4)
        }
        Err(e) => {
            eprintln!("{}", e.reason_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
