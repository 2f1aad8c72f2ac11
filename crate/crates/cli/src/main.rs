use std::process::ExitCode;

use clap::Parser;
use pfasst_heat::{run_and_report, Args};

fn main() -> ExitCode {
    let args = Args::parse();
    match run_and_report(&args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("pfasst-heat: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
