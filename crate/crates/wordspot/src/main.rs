use std::process::ExitCode;

use clap::Parser;
use wordspot::cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
        Err(_) => {
            eprintln!("{}", serde_json::json!({ "error": "internal", "message": "unexpected panic" }));
            ExitCode::from(2)
        }
    }
}
