//! `mbdos`: command-line front end for the many-body density-of-states
//! pipeline.
//!
//! Exit status: 0 success, 1 usage or invalid parameters, 2 validation
//! failure, 3 cache or table corruption. Failures print one JSON object on
//! standard error.

mod args;
mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::Cli;

/// Why a command did not succeed.
#[derive(Debug)]
pub enum Failure {
    Core(mbdos::Error),
    /// A check ran to completion and found a mismatch.
    Validation(String),
    /// The cache holds entries whose checksums do not verify.
    Corrupt(String),
}

impl From<mbdos::Error> for Failure {
    fn from(e: mbdos::Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(e.into())
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Core(mbdos::Error::Checksum(_) | mbdos::Error::Version { .. }) => 3,
            Failure::Core(_) => 1,
            Failure::Validation(_) => 2,
            Failure::Corrupt(_) => 3,
        }
    }

    fn to_json(&self) -> serde_json::Value {
        let (kind, message) = match self {
            Failure::Core(e) => (e.kind(), e.to_string()),
            Failure::Validation(m) => ("validation", m.clone()),
            Failure::Corrupt(m) => ("cache-corrupt", m.clone()),
        };
        serde_json::json!({ "error": kind, "message": message })
    }
}

fn fail(kind: &str, message: &str, code: u8) -> ExitCode {
    eprintln!(
        "{}",
        serde_json::json!({ "error": kind, "message": message })
    );
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text
                .lines()
                .next()
                .unwrap_or("")
                .trim_start_matches("error: ");
            return fail("usage", first, 1);
        }
    };
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            return fail("usage", &format!("cannot start {threads} threads: {e}"), 1);
        }
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        // A closed downstream pipe (`mbdos … | head`) is not a failure.
        Err(Failure::Core(mbdos::Error::Io(e))) if e.kind() == std::io::ErrorKind::BrokenPipe => {
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("{}", f.to_json());
            ExitCode::from(f.exit_code())
        }
    }
}
