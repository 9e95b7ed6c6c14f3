mod args;
mod artifact;
mod commands;
mod table;

use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = args::Cli::parse();
    match commands::run(&cli) {
        Ok(commands::Outcome::Converged) => ExitCode::SUCCESS,
        Ok(commands::Outcome::NotConverged(what)) => {
            for w in what {
                eprintln!("warning: {w}");
            }
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
