//! Library side of the `qct` binary: argument parsing, the subcommands, and
//! JSON error reporting.

pub mod args;
pub mod commands;
pub mod error;
pub mod expr;
pub mod fields;

use std::ffi::OsString;
use std::io::Write;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use error::CliError;

/// Runs the command line `argv` and returns the process exit code. Normal
/// output goes to `out`; failures are written to `err` as one JSON object.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let result = match Cli::try_parse_from(argv) {
        Ok(cli) => dispatch(&cli, out),
        Err(e) => match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                let _ = write!(out, "{}", e.render());
                return 0;
            }
            kind => Err(clap_error(kind, &e.render().to_string())),
        },
    };
    let _ = out.flush();
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "{}", e.to_json());
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::State(a) => commands::state(a, out),
        Command::Ocp(a) => commands::ocp(a, out),
        Command::Table(a) => commands::table(a, out),
        Command::Check(a) => commands::check(a, out),
    }
}

fn clap_error(kind: ErrorKind, rendered: &str) -> CliError {
    let message = rendered
        .lines()
        .next()
        .unwrap_or_default()
        .trim_start_matches("error: ")
        .to_string();
    match kind {
        ErrorKind::InvalidValue | ErrorKind::ValueValidation => CliError::InvalidArgument(message),
        _ => CliError::Usage(message),
    }
}
