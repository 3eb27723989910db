//! `setrank` command-line entry point.

use std::process::ExitCode;

fn main() -> ExitCode {
    setrank_cli::main_with(std::env::args_os())
}
