use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = primdraw_cli::Cli::parse();
    match primdraw_cli::execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("primdraw: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
