//! `blochhom` command-line driver.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use blochhom::ErrorKind;
use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::output::Output;

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Numerical(String),
    /// The run finished and its outputs were written, but a check failed.
    Acceptance(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Acceptance(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "validation error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Acceptance(m) => write!(f, "acceptance violation: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<blochhom::Error> for CliError {
    fn from(e: blochhom::Error) -> Self {
        match e.kind() {
            ErrorKind::Validation => CliError::Validation(e.to_string()),
            ErrorKind::Numerical => CliError::Numerical(e.to_string()),
        }
    }
}

/// Prefix library errors with the stage they came from.
pub trait Context<T> {
    fn ctx(self, stage: &str) -> Result<T, CliError>;
}

impl<T> Context<T> for Result<T, blochhom::Error> {
    fn ctx(self, stage: &str) -> Result<T, CliError> {
        self.map_err(|e| match CliError::from(e) {
            CliError::Validation(m) => CliError::Validation(format!("{stage}: {m}")),
            CliError::Numerical(m) => CliError::Numerical(format!("{stage}: {m}")),
            other => other,
        })
    }
}

#[derive(Parser, Debug)]
#[command(name = "blochhom", version, about = "Bloch-wave homogenization at band-gap frequencies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run-config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Dispersion CSV in units of k0 = pi and omega0 = sqrt(G1 / rho1).
    #[arg(long, global = true)]
    normalized: bool,
    /// Also write transects of 2D fields along x2 = y0 (slow coordinate).
    #[arg(long, global = true, value_name = "y0=<v>", value_parser = parse_line)]
    line: Option<f64>,
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Band structure along the k-path.
    Dispersion,
    /// Complete band gaps.
    Gaps,
    /// Gamma eigenfunction and correctors sampled on the unit cell.
    Cell,
    /// Effective coefficients and diagnostics.
    Effective,
    /// Exact, reference and homogenized fields per eps.
    Fields,
    /// Error-versus-eps study with slope checks.
    Converge,
}

fn parse_line(s: &str) -> Result<f64, String> {
    let v = s.strip_prefix("y0=").ok_or_else(|| "expected y0=<value>".to_string())?;
    let y: f64 = v.parse().map_err(|e| format!("{v}: {e}"))?;
    if !y.is_finite() {
        return Err("y0 must be finite".into());
    }
    Ok(y)
}

pub struct Flags {
    pub normalized: bool,
    pub line: Option<f64>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let path = cli.config.ok_or_else(|| CliError::Validation("--config <path> is required".into()))?;
    let cfg = RunConfig::load(&path)?;
    let dir = cli.out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("."));
    let out = Output::new(dir, cfg.hash(), cli.verbose)?;
    out.log(format!("config {} sha256 {}", path.display(), out.config_hash));
    let flags = Flags { normalized: cli.normalized, line: cli.line };
    match cli.command {
        Command::Dispersion => commands::dispersion(&cfg, &out, &flags),
        Command::Gaps => commands::gaps(&cfg, &out),
        Command::Cell => commands::cell(&cfg, &out),
        Command::Effective => commands::effective(&cfg, &out),
        Command::Fields => commands::fields(&cfg, &out, &flags),
        Command::Converge => commands::converge(&cfg, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("blochhom: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
