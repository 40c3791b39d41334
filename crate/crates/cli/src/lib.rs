//! `nnsens`: train networks on tabular or sequence data, rank their inputs
//! by sensitivity, select features and rerun both reference experiments.
//!
//! Every artifact-producing command writes a [`manifest::RunManifest`] next
//! to its outputs. Exit status is 0 on success, 1 for numeric failures
//! (including an all-zero sensitivity normalizer) and 2 for usage or I/O
//! errors.

pub mod args;
pub mod commands;
pub mod error;
pub mod manifest;
pub mod pipeline;
pub mod svg;

use clap::Parser;

pub use args::Cli;
pub use error::{CliError, CliResult};

pub fn run(cli: &Cli, argv: &[String]) -> CliResult<()> {
    use args::Command;
    match &cli.command {
        Command::Simulate(a) => commands::simulate::run(a, argv),
        Command::Train(a) => commands::train::run(a, argv),
        Command::Explain(a) => commands::explain::run(a, argv),
        Command::Select(a) => commands::select::run(a, argv),
        Command::Gradcheck(a) => commands::gradcheck::run(a, argv),
        Command::Reproduce(a) => commands::reproduce::run(a, argv),
    }
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit status.
pub fn main_with_args(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli, &argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
