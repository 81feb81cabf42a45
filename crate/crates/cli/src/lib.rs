//! Command-line front end: argument parsing, config files, run manifests
//! and the commands themselves.

pub mod args;
pub mod commands;
pub mod error;
pub mod manifest;
pub mod settings;

pub use error::{CliError, CliResult};

/// Runs one parsed invocation.
pub fn run(cli: args::Cli) -> CliResult<()> {
    commands::dispatch(cli.command)
}
