use clap::Parser;
use std::process::ExitCode;

fn main() -> ExitCode {
    let cli = evac_cli::Cli::parse();
    match evac_cli::execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("evac: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
