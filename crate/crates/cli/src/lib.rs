//! Command surface of the `catp` binary: universe checks, dataset
//! generation, training, planning, evaluation and reports.

pub mod args;
pub mod commands;
pub mod exit;
pub mod inputs;
pub mod results;

pub use args::Cli;
pub use exit::{exit_code, Invalid};

/// Runs one parsed command line.
pub fn run(cli: Cli) -> anyhow::Result<()> {
    commands::dispatch(cli)
}
