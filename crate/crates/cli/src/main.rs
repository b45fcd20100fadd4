//! `srdp`: curve data, compositions, conversions and sandwich checks for
//! subsampled Rényi-DP.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::Parser;

use crate::config::Cli;

/// Failure classes mapped onto the process exit status.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, malformed specs, inapplicable bounds, I/O problems. Exit 2.
    Usage(String),
    /// The sandwich check failed on at least one row. Exit 3.
    Verification(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Verification(_) => 3,
        }
    }
}

impl From<subsampled_rdp::Error> for CliError {
    fn from(e: subsampled_rdp::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (CliError::Usage(msg) | CliError::Verification(msg)) = &e;
            eprintln!("srdp: {msg}");
            ExitCode::from(e.exit_code())
        }
    }
}
