//! `mage`: command-line front end for the augmentation and classification
//! pipeline.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod cli;
mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;
use mage_core::Error;

use crate::cli::Cli;

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

fn exit_code(err: &Error) -> u8 {
    match err.root() {
        Error::Usage(_) | Error::Config(_) => EXIT_USAGE,
        Error::Numeric(_) | Error::LineSearch { .. } => EXIT_NUMERIC,
        Error::Shape { .. }
        | Error::Validation(_)
        | Error::Parse { .. }
        | Error::Schema(_)
        | Error::Stratification(_)
        | Error::Io { .. }
        | Error::Context { .. } => EXIT_DATA,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let env_output = std::env::var_os(config::OUTPUT_ENV)
        .filter(|v| !v.is_empty())
        .map(Into::into);
    let result = config::resolve(&cli.global, env_output).and_then(|cfg| commands::run(&cli.command, &cfg));
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
