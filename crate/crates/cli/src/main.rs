//! `hyperch`: simulations and experiments for the damped hyperbolic
//! Cahn-Hilliard-type equation from the command line.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "hyperch", version, about = "Spectral simulations and long-time experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration (defaults are used for missing keys, or for everything if omitted)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for reports, trajectories and the echoed config
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Overrides the run seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Only print errors
    #[arg(long, global = true)]
    quiet: bool,
    /// Runs a single named check (`check` only)
    #[arg(long, global = true)]
    only: Option<String>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Integrate from the configured initial state to t_end
    Simulate,
    /// Run the invariant suite
    Check,
    /// Galerkin convergence study against a fine reference
    Converge,
    /// Compact/decaying decomposition of a trajectory
    Decompose,
    /// Newton solve for a stationary state seeded with initial.u
    Equilibrium,
    /// Long run followed by refinement of the end state into an equilibrium
    Lojasiewicz,
    /// Absorbing-ball probe over a ladder of initial radii
    Absorb,
    /// Growth of perturbations and its dependence on their size
    Lipschitz,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    let opts = commands::Options {
        config: cli.config,
        output_dir: cli.output_dir,
        seed: cli.seed,
        quiet: cli.quiet,
        only: cli.only,
    };
    match commands::run(cli.command, &opts) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
