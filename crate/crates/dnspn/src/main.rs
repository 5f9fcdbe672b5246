use std::process::ExitCode;

use clap::Parser;
use dnspn::cli::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dnspn::run(&cli) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
