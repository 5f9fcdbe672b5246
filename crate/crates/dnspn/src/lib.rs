//! File formats, experiment runner and command-line front end for
//! [`dnspn_core`].
//!
//! Exit codes of the `dnspn` binary: 0 success, 1 I/O or other failure,
//! 2 usage or invalid parameter, 3 data error (unreadable or mismatched
//! input), 4 numeric failure during training.

pub mod artifacts;
pub mod cli;
pub mod commands;
pub mod config;
pub mod csv_io;
pub mod error;
pub mod runner;

pub use error::{exit, CliError, Result};

use cli::{Cli, Command};

/// Runs one parsed command line.
pub fn run(cli: &Cli) -> Result<std::path::PathBuf> {
    match &cli.command {
        Command::Generate(a) => commands::cmd_generate(a),
        Command::Train(a) => commands::cmd_train(a),
        Command::Evaluate(a) => commands::cmd_evaluate(a),
        Command::Compare(a) => commands::cmd_compare(a),
        Command::MaskCurve(a) => commands::cmd_mask_curve(a),
    }
}
