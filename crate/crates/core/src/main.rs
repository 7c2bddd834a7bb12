use std::process::ExitCode;

use adaptive_mdiqkd::cli::{self, Cli};
use clap::error::ErrorKind;
use clap::Parser;

fn main() -> ExitCode {
    let args = match Cli::try_parse() {
        Ok(args) => args,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match cli::run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mdiqkd: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
