use std::process::ExitCode;

use clap::Parser;

use cga_cli::commands::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command).and_then(|r| r.emit(cli.output.as_deref())) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
