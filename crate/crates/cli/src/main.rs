use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod error;
mod plot;

use error::CliError;

/// Experiments on the dynamic information sharing game.
#[derive(Debug, Parser)]
#[command(name = "disg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON experiment file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Grid resolution, overriding the config.
    #[arg(long)]
    grid: Option<u32>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse the config and check the model.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compute the cooperation region by iterative refinement.
    Solve(Common),
    /// Absorbing box, its reward infimum and a cost that keeps it an equilibrium.
    Bound(Common),
    /// Sample a trajectory under the computed CGT profile.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Overrides simulate.seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Brute-force the finite-horizon game over common-history strategies.
    FiniteCheck(Common),
    /// Solve once per sweep entry.
    Sweep(Common),
    /// Draw the regions of a region table as an SVG band chart.
    Plot {
        /// Region CSV, plain or with a label column.
        #[arg(long)]
        input: PathBuf,
        /// SVG file to write.
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Validate { config } => commands::validate(&config),
        Command::Solve(c) => commands::solve(&c.config, &c.out, c.grid),
        Command::Bound(c) => commands::bound(&c.config, &c.out, c.grid),
        Command::Simulate { common: c, seed } => {
            commands::simulate(&c.config, &c.out, c.grid, seed)
        }
        Command::FiniteCheck(c) => commands::finite_check(&c.config, &c.out),
        Command::Sweep(c) => commands::sweep(&c.config, &c.out, c.grid),
        Command::Plot { input, out } => commands::plot(&input, &out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
