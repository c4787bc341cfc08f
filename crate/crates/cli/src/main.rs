//! `wentzell`: simulate, find equilibria of, and analyze the Cahn-Hilliard
//! equation with Wentzell boundary conditions.

mod check;
mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "wentzell", version, about)]
struct Cli {
    /// More log output (repeat for debug); RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the evolution described by a config file.
    Simulate {
        config: PathBuf,
        /// Output directory (default: `io.output_dir` from the config).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Find an equilibrium by descent and Newton refinement, and classify it.
    Equilibrium {
        config: PathBuf,
        /// Start from this saved field instead of the configured initial data.
        #[arg(long)]
        init: Option<PathBuf>,
        /// Output directory (default: `<io.output_dir>/equilibrium`).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Spectrum at psi, Lojasiewicz-Simon probe and decay rate of a run.
    Analyze {
        run_dir: PathBuf,
        psi: PathBuf,
        /// Output directory (default: `<run_dir>/analysis`).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Check the discrete invariants on a tiny grid.
    Check,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match &cli.command {
        Command::Simulate { config, output } => commands::simulate(config, output.as_deref()),
        Command::Equilibrium {
            config,
            init,
            output,
        } => commands::equilibrium(config, init.as_deref(), output.as_deref()),
        Command::Analyze {
            run_dir,
            psi,
            output,
        } => commands::analyze(run_dir, psi, output.as_deref()),
        Command::Check => commands::check(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
