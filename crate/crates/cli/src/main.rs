//! `carlab`: runs the forward, Carleman and inverse experiments from a TOML
//! configuration and writes comma-separated artifacts.
//!
//! Exit status is 0 on success, 1 when a certification, solver or pipeline
//! step fails, and 2 when the configuration cannot be used.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ConfigError, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "carlab", version, about = "Carleman-weight and inverse-potential experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory; overrides `[output] dir`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// Noise seed; overrides `[inverse] seed`.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Certify the weight function of `[weight]`.
    CheckWeights,
    /// Solve the forward problem and report conservation.
    Forward,
    /// Sweep the Carleman inequality over `(s, λ)`.
    Carleman,
    /// Stability ratios for internal observations.
    Ip1,
    /// Stability ratios for boundary observations.
    Ip2,
    /// Gauss–Newton reconstruction of the potential `a`.
    Reconstruct,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::CheckWeights => "check-weights",
            Command::Forward => "forward",
            Command::Carleman => "carleman",
            Command::Ip1 => "ip1",
            Command::Ip2 => "ip2",
            Command::Reconstruct => "reconstruct",
        }
    }
}

/// Why a run stopped.
#[derive(Debug)]
pub enum Failure {
    Config(ConfigError),
    Run(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<carlab::Error> for Failure {
    fn from(e: carlab::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(format!("writing artifacts: {e}"))
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let path = cli.config.as_ref().ok_or_else(|| {
        Failure::Config(ConfigError { path: "<none>".into(), line: None, message: "--config PATH is required".into() })
    })?;
    let cfg = RunConfig::load(path)?;
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(Failure::Config(ConfigError { path: "--jobs".into(), line: None, message: "must be at least 1".into() }));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::Run(e.to_string()))?;
    }
    let dir = cli.out.clone().or_else(|| cfg.output_dir().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"));
    let out = output::Artifacts::new(&dir, cli.command.name(), &cfg.sha256);
    match cli.command {
        Command::CheckWeights => commands::check_weights(&cfg, &out),
        Command::Forward => commands::forward(&cfg, &out),
        Command::Carleman => commands::carleman(&cfg, &out),
        Command::Ip1 => commands::ip1(&cfg, &out),
        Command::Ip2 => commands::ip2(&cfg, &out),
        Command::Reconstruct => commands::reconstruct(&cfg, &out, cli.seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Run(msg)) => {
            eprintln!("carlab {}: {msg}", cli.command.name());
            ExitCode::from(1)
        }
        Err(Failure::Config(e)) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
    }
}
