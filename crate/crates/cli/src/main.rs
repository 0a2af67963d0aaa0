//! `crl-risklab`: reproducible runs of the contrastive risk laboratory.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 a checked inequality or
//! identity failed.

mod artifacts;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error(transparent)]
    Core(#[from] crl_risklab::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use crl_risklab::Error as E;
        match self {
            CliError::Contract(_) | CliError::Core(E::TrainingDiverged(_) | E::InsufficientTrials { .. }) => 2,
            _ => 1,
        }
    }
}

#[derive(Parser)]
#[command(name = "crl-risklab", version, about = "Contrastive risks, OCE losses and AUC retrieval on finite spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Invocation {
    /// JSON or TOML file with any of the flags below; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    flags: RunConfig,
}

#[derive(Subcommand)]
enum Command {
    /// Train on the population risk and track excess risk against E* − E.
    Consistency(Invocation),
    /// Sweep the calibration inequality over random problems and scorers.
    Calibration(Invocation),
    /// Log-sum-exp versus entropic OCE on random samples.
    OceCheck(Invocation),
    /// OCE versus its divergence-penalized dual and a simplex grid primal.
    DroCheck(Invocation),
    /// Monte-Carlo scaling of inner or outer error with a log-log fit.
    Scaling(Invocation),
    /// Worst-case generalization gap over random hypotheses.
    Gap(Invocation),
    /// Downstream AUC over an (n, m) grid and the critical negative size.
    CriticalM(Invocation),
    /// Projected gradient descent on a population or sampled objective.
    Train(Invocation),
    /// Zero-shot class posteriors.
    ZeroShot(Invocation),
    /// Load a problem and report its optimal risk and AUC.
    Validate(Invocation),
}

impl Command {
    fn split(self) -> (&'static str, Invocation) {
        match self {
            Command::Consistency(i) => ("consistency", i),
            Command::Calibration(i) => ("calibration", i),
            Command::OceCheck(i) => ("oce-check", i),
            Command::DroCheck(i) => ("dro-check", i),
            Command::Scaling(i) => ("scaling", i),
            Command::Gap(i) => ("gap", i),
            Command::CriticalM(i) => ("critical-m", i),
            Command::Train(i) => ("train", i),
            Command::ZeroShot(i) => ("zero-shot", i),
            Command::Validate(i) => ("validate", i),
        }
    }
}

fn resolve(name: &str, inv: Invocation) -> Result<RunConfig, CliError> {
    let file = match &inv.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if !file.command.is_empty() && file.command != name {
        return Err(CliError::Usage(format!("config file is for {:?}, not {name:?}", file.command)));
    }
    let mut cfg = file.overlay(&inv.flags);
    cfg.command = name.to_string();
    cfg.check_keys()?;
    Ok(cfg)
}

fn thread_count(cfg: &RunConfig) -> Result<Option<usize>, CliError> {
    if let Some(t) = cfg.threads {
        return Ok(Some(t));
    }
    match std::env::var("CRL_RISKLAB_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("CRL_RISKLAB_THREADS must be a count, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

fn run(name: &str, inv: Invocation) -> Result<(), CliError> {
    let cfg = resolve(name, inv)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = thread_count(&cfg)? {
        pool = pool.num_threads(t);
    }
    let pool = pool.build().map_err(|e| CliError::Usage(e.to_string()))?;
    pool.install(|| commands::dispatch(&cfg))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let (name, inv) = cli.command.split();
    match run(name, inv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
