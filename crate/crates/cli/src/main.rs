use std::process::ExitCode;

use clap::Parser;
use snode_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Some(manifest)) => {
            eprintln!("manifest: {}", manifest.display());
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("snode: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
