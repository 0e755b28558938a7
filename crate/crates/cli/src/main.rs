//! `rsvd`: robust SVD decomposition, video background modelling and mask
//! evaluation from the shell.
//!
//! Exit codes: 0 success, 2 unreadable or malformed input, 3 the fit ran but
//! did not fully converge (outputs are still written, with flags), 4 flag or
//! parameter misuse.

mod args;
mod commands;
mod manifest;

use std::env;
use std::process::ExitCode;

use clap::Parser;

use rsvd_core::Error;

use crate::args::Cli;
use crate::commands::Status;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 4,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(4);
    }
    match commands::run(cli) {
        Ok(Status::Clean) => ExitCode::SUCCESS,
        Ok(Status::NotConverged) => {
            eprintln!("warning: fit did not fully converge; outputs written with flags");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Map library errors onto the exit-code contract. By the time a command
/// calls into the library its flags have already been validated (those
/// failures surface as `Domain`), so `InvalidInput` and friends can only
/// come from the data itself.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_)
        | Error::Format(_)
        | Error::InvalidInput(_)
        | Error::DegenerateInput(_)
        | Error::RankDeficient { .. } => 2,
        Error::Domain(_) | Error::DimensionMismatch(_) => 4,
    }
}

/// Cap rayon's worker count from `RSVD_THREADS` before any parallel work
/// starts. Unset or empty means the rayon default (one thread per core).
fn configure_threads() -> Result<(), String> {
    let Some(raw) = env::var_os("RSVD_THREADS") else {
        return Ok(());
    };
    let raw = raw.to_string_lossy();
    if raw.trim().is_empty() {
        return Ok(());
    }
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| format!("RSVD_THREADS must be a positive integer, got {raw:?}"))?;
    if n == 0 {
        return Err("RSVD_THREADS must be a positive integer, got 0".into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| format!("could not configure the thread pool: {e}"))
}
