//! `fedpgn`: run differentially private federated training, query the
//! privacy accountant, and probe trained models.

mod commands;
mod error;
mod settings;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(version, about = "Differentially private federated learning with server pseudo-gradient perturbation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration and write a run directory.
    Run(commands::RunArgs),
    /// Privacy budget of R rounds, or the noise multiplier for a target budget.
    Accountant(commands::AccountantArgs),
    /// Loss surface around a checkpoint.
    Landscape(commands::LandscapeArgs),
    /// Dirichlet label partition of the configured dataset as JSON.
    Partition(commands::PartitionArgs),
}

fn main() -> ExitCode {
    let result = match Cli::parse().command {
        Command::Run(args) => commands::run(args),
        Command::Accountant(args) => commands::accountant(args),
        Command::Landscape(args) => commands::landscape(args),
        Command::Partition(args) => commands::partition(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
