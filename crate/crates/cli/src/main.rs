use std::process::ExitCode;

use clap::Parser;
use hybridsurf_cli::config::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match hybridsurf_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = serde_json::to_string(&e.report()).unwrap_or_else(|_| format!("{{\"error\":\"{}\"}}", e.kind()));
            eprintln!("{report}");
            ExitCode::FAILURE
        }
    }
}
