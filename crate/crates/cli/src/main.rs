//! `prunedoc` command-line tool.

mod args;
mod commands;
mod failure;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

use crate::args::{Cli, Command};

/// Exit status when the pruned token set is empty.
pub const EXIT_FULLY_PRUNED: u8 = 3;

fn main() -> ExitCode {
    let argv = match args::expand_config(std::env::args_os().collect()) {
        Ok(argv) => argv,
        Err(f) => return f.report(),
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { failure::EXIT_USAGE } else { 0 });
        }
    };
    let mut command = cli.command;
    if let Err(f) = args::apply_seed_env(&mut command) {
        return f.report();
    }
    let result = match command {
        Command::Synth(a) => commands::synth::run(a),
        Command::Train(a) => commands::train::run(a),
        Command::Prune(a) => commands::prune::run(a),
        Command::Stats(a) => commands::stats::run(a),
        Command::Overlay(a) => commands::overlay::run(a),
        Command::Oracle(a) => commands::oracle::run(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => f.report(),
    }
}
