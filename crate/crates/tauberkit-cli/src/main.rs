use clap::Parser;
use std::process::ExitCode;
use tauberkit_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tauberkit {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code())
        }
    }
}
