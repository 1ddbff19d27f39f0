//! `microspot`: batch pipeline subcommands run in-process; `serve` starts
//! the annotation service and `review` talks to one over HTTP.

use std::process::ExitCode;

use clap::Parser;
use tracing_subscriber::EnvFilter;

mod args;
mod commands;
mod review;

use args::{Cli, Command};

fn run(cli: &Cli) -> anyhow::Result<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs as usize)
            .build_global()?;
    }
    match &cli.command {
        Command::Synth(a) => commands::synth(cli, a),
        Command::Preprocess(a) => commands::preprocess(cli, a),
        Command::ExtractFeatures(a) => commands::extract_features(cli, a),
        Command::Train(a) => commands::train(cli, a),
        Command::Spot(a) => commands::spot(cli, a),
        Command::Evaluate(a) => commands::evaluate(cli, a),
        Command::Serve(a) => commands::serve(cli, a),
        Command::Review(a) => review::run(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(2));
        }
    };
    // No timestamps, so logs of a seeded run are reproducible.
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .without_time()
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
