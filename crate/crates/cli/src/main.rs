//! Command-line entry point: configuration parsing, orchestration of solves
//! and verification labs, CSV/JSON report emission.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{cmd_match_energy, cmd_scan, cmd_solve, cmd_verify};
use crate::config::RunConfig;

#[derive(Parser)]
#[command(
    name = "qmaxent",
    about = "Constrained free-energy minimizers on the 1-torus and their verification labs",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Path to the TOML run configuration (built-in defaults when omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides output.directory from the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for the randomized suites (overrides lab.seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for independent solves; 0 picks the default.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the constrained minimizer at the configured target.
    Solve,
    /// Run the scan, integral-relation, and inequality verdicts.
    Verify,
    /// Temperature scan only.
    Scan,
    /// Match a global energy target by temperature bisection.
    MatchEnergy,
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    let mut config = match &cli.config {
        Some(path) => match RunConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("configuration error: {e:#}");
                return ExitCode::from(1);
            }
        },
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.lab.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output.directory = out.display().to_string();
    }
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("configuration error: thread pool: {e}");
            return ExitCode::from(1);
        }
    }

    let dir = PathBuf::from(&config.output.directory);
    if let Err(e) = std::fs::create_dir_all(&dir) {
        eprintln!("configuration error: creating {}: {e}", dir.display());
        return ExitCode::from(1);
    }

    let result = match cli.command {
        Command::Solve => cmd_solve(&config, &dir),
        Command::Verify => cmd_verify(&config, &dir),
        Command::Scan => cmd_scan(&config, &dir),
        Command::MatchEnergy => cmd_match_energy(&config, &dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.message());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
