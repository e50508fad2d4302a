//! `gce`: reproducible pretraining, fine-tuning, generation, and
//! evaluation runs from the command line.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

mod commands;
mod config;
mod data;
mod manifest;

use clap::Parser;

fn main() {
    let cli = commands::Cli::parse();
    if let Err(e) = commands::run(cli) {
        eprintln!("error: {e:#}");
        let code = if e.downcast_ref::<config::UsageError>().is_some() { 2 } else { 1 };
        std::process::exit(code);
    }
}
