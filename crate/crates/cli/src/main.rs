//! `csae` command-line entry point.
//!
//! Exit codes: 0 on success, 1 for usage errors, 2 for runtime failures
//! (including a failed gradient check).

mod args;
mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};

fn run(cli: Cli) -> csae_core::Result<bool> {
    match &cli.command {
        Command::Train(a) => commands::train(a)?,
        Command::Eval(a) => commands::eval(a)?,
        Command::ExtractLatent(a) => commands::extract_latent(a)?,
        Command::ClassifyLatent(a) => commands::classify_latent(a)?,
        Command::VizBoundary(a) => commands::viz_boundary(a)?,
        Command::VizDecoderGrid(a) => commands::viz_decoder_grid(a)?,
        Command::Gradcheck(a) => return commands::gradcheck(a),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
