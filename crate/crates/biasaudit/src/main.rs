use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    match biasaudit::cli::run(biasaudit::cli::Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
