use std::process::ExitCode;

use clap::Parser;
use crease_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("crease: {e}");
            ExitCode::from(e.code)
        }
    }
}
