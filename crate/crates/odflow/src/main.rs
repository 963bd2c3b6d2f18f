//! Binary entry point. All failures end with a single JSON error record as
//! the last stderr line; the exit code encodes the error kind.

use std::io::Write;

use clap::Parser;

use odflow::cli::{dispatch, Cli};
use odflow::error::CliError;

fn main() {
    std::process::exit(real_main());
}

/// Help and version go through here so `odflow --help | head` does not
/// panic on the closed pipe.
fn print_ignoring_pipe(text: &str) {
    let _ = write!(std::io::stdout().lock(), "{text}");
}

fn real_main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print_ignoring_pipe(&e.to_string());
                return 0;
            }
            eprint!("{e}");
            let message = e.to_string().lines().next().unwrap_or("bad arguments").to_owned();
            let err = CliError::config_invalid(message);
            eprintln!("{}", err.record());
            return err.kind.exit_code();
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {}", err.message);
            eprintln!("{}", err.record());
            err.kind.exit_code()
        }
    }
}
