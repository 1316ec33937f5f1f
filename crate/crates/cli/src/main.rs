//! `stripfront`: command-line front end for the strip-domain free boundary
//! solver and its verification suite.
//!
//! Every run-style subcommand reads the same `key = value` config format,
//! writes its outputs under `--out`, and finishes with `manifest.json`
//! recording the config digest, tolerances, wall time, and a checksum per
//! output. Runs are deterministic for a fixed config and seed.

mod commands;
mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "stripfront", version, about = "Strip-domain free boundary solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the coupled bulk/front solve.
    Solve(RunArgs),
    /// Solve one degenerate elliptic problem at the initial level.
    SolveElliptic(RunArgs),
    /// Propagate the front alone with the configured velocity preset.
    HjSolve(RunArgs),
    /// Measure transverse symbol identities and decay (CSV output).
    VerifySymbols(RunArgs),
    /// Measure the operator-family hypotheses on dense reductions (JSON).
    VerifyOperators(RunArgs),
    /// Weighted Hoelder norm report for a stored field container.
    Norms(NormArgs),
}

#[derive(Args)]
pub struct RunArgs {
    /// Path to the key = value config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Also export tidy CSVs alongside binary field outputs.
    #[arg(long)]
    csv: bool,
    /// Cap worker threads (overrides the config value).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
pub struct NormArgs {
    /// Field container to measure.
    #[arg(long)]
    field: PathBuf,
    /// Hoelder exponent of the time seminorm.
    #[arg(long)]
    beta: f64,
    /// Weight exponent: negative gamma measures `t^gamma u`.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    gamma: f64,
}

fn main() {
    std::process::exit(run(Cli::parse()));
}

fn run(cli: Cli) -> i32 {
    let (config, exec): (Option<&PathBuf>, Box<dyn FnOnce() -> stripfront::Result<()>>) =
        match &cli.command {
            Command::Solve(a) => (Some(&a.config), Box::new(|| commands::solve(a))),
            Command::SolveElliptic(a) => (Some(&a.config), Box::new(|| commands::solve_elliptic(a))),
            Command::HjSolve(a) => (Some(&a.config), Box::new(|| commands::hj_solve_front(a))),
            Command::VerifySymbols(a) => (Some(&a.config), Box::new(|| commands::verify_symbols(a))),
            Command::VerifyOperators(a) => {
                (Some(&a.config), Box::new(|| commands::verify_operators(a)))
            }
            Command::Norms(a) => (None, Box::new(|| commands::norms(a))),
        };
    if let Some(path) = config {
        if !path.is_file() {
            eprintln!("stripfront: config file `{}` not found", path.display());
            return 2;
        }
    }
    match exec() {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("stripfront: {e}");
            1
        }
    }
}
