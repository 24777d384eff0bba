//! `gazehead` command-line entry point.
//!
//! Exit codes: 0 on success, 2 on usage errors, 1 on runtime errors. Runtime
//! errors print one line `error kind=<kind>: <message>` to stderr.

mod args;
mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let argv = match config::expand(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error kind=usage: {msg}");
            return ExitCode::from(2);
        }
    };
    let cli = match args::Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error kind={}: {e}", e.kind());
            ExitCode::from(1)
        }
    }
}
