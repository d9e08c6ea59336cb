//! `gammaphi` command-line front end.
//!
//! Exit codes are a stable contract: 0 ok, 1 solver failure, 2 sufficient
//! conditions fail, 3 calibration violation, 4 inconclusive, 5 counterexample
//! verification failed, 64 usage or input error.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub const EXIT_OK: u8 = 0;
pub const EXIT_SOLVER: u8 = 1;
pub const EXIT_CONDITIONS: u8 = 2;
pub const EXIT_VIOLATION: u8 = 3;
pub const EXIT_INCONCLUSIVE: u8 = 4;
pub const EXIT_VERIFICATION: u8 = 5;
pub const EXIT_USAGE: u8 = 64;

#[derive(Debug, Parser)]
#[command(name = "gammaphi", version, about = "Gamma-Phi multiclass losses: risks, calibration, counterexample")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the sufficient conditions for classification-calibration.
    Conditions(ConditionsArgs),
    /// Evaluate a conditional risk or the conditional Bayes risk.
    Risk(RiskArgs),
    /// Search the simplex for calibration violations.
    Certify(CertifyArgs),
    /// Verify the counterexample loss at p = (r, 1 - r, 0, ...).
    Cex(CexArgs),
    /// Run the consistency simulation on a finite distribution.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Pretty,
}

#[derive(Debug, Args)]
pub struct LossArgs {
    /// Named preset: logistic, coherence[:T], pairwise-exp, savage[:scale], sigmoid, cex.
    #[arg(long, conflicts_with = "config")]
    pub loss: Option<String>,
    /// Loss config file in `key = value` format.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Write the JSON report to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory for the JSON report and CSV plot data.
    #[arg(long, env = "GAMMAPHI_OUT_DIR")]
    pub out_dir: Option<PathBuf>,
    /// Format of the document printed on stdout.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Args)]
pub struct ConditionsArgs {
    #[command(flatten)]
    pub loss: LossArgs,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct RiskArgs {
    #[command(flatten)]
    pub loss: LossArgs,
    /// Class probabilities, comma separated.
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    pub p: Vec<f64>,
    /// Scores, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "bayes")]
    pub v: Option<Vec<f64>>,
    /// Compute the conditional Bayes risk instead.
    #[arg(long)]
    pub bayes: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub loss: LossArgs,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Number of sampled probability vectors.
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// interior, boundary or stratified.
    #[arg(long, default_value = "stratified")]
    pub mode: String,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct CexArgs {
    #[arg(long, default_value_t = 0.6)]
    pub r: f64,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Bound on the witness gap at the largest t.
    #[arg(long, default_value_t = 2e-3)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Distribution file: {"cells": [{"mass": m, "cond": [...]}, ...]}.
    #[arg(long)]
    pub dist: PathBuf,
    #[command(flatten)]
    pub loss: LossArgs,
    /// Replay the divergent witness on violating cells (counterexample loss only).
    #[arg(long)]
    pub adversarial: bool,
    /// Gradient steps per cell.
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let argv: Vec<String> = std::env::args().collect();
    match commands::run(&cli.command, &argv) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
