//! `specreg` experiment driver.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 numerical
//! failure, 3 a `check` that ran but found violations.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "specreg", version, about = "Spectral regularization experiments")]
struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `outputs.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Spectrum (and spectral coordinates of Y) of the configured problem.
    Decompose,
    /// Penalty quantities on every grid point, as CSV.
    PenaltyTable,
    /// Data-driven choice of the regularization parameter.
    Select,
    /// Monte Carlo benchmark against the oracle risk.
    Bench,
    /// Ordering, structural conditions and penalty inequalities.
    Check,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(specreg::Error),
    Io(String),
    CheckFailed,
}

impl From<specreg::Error> for CliError {
    fn from(e: specreg::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e)
        } else {
            CliError::Config(e.to_string())
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::CheckFailed => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(e) => write!(f, "numerical failure: {e}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::CheckFailed => write!(f, "check failed"),
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(dispatch(std::env::args_os()))
}

/// Parses `args` and runs the command, returning the process exit code.
fn dispatch<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("specreg: {e}");
            e.exit_code()
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let (mut cfg, base) = config::ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match &cli.out {
        Some(dir) => cfg.outputs.dir = dir.clone(),
        None => cfg.outputs.dir = base.join(&cfg.outputs.dir),
    }
    std::fs::create_dir_all(&cfg.outputs.dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", cfg.outputs.dir.display())))?;
    let ctx = commands::Context { cfg, base };
    match cli.command {
        Command::Decompose => commands::decompose(&ctx),
        Command::PenaltyTable => commands::penalty_table(&ctx),
        Command::Select => commands::select(&ctx),
        Command::Bench => commands::bench(&ctx),
        Command::Check => commands::check(&ctx),
    }
}
