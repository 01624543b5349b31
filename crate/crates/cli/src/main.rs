use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

mod cmd;
mod data;
mod manifest;
mod run_dir;

#[derive(Debug, Parser)]
#[command(
    name = "allocore",
    version,
    about = "Poisson tensor decomposition with an allocated sparse core"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load a tensor, report its size and write it as COO with vocabularies.
    Ingest(cmd::ingest::IngestArgs),
    /// Draw seeded fiber masks.
    Mask(cmd::mask::MaskArgs),
    /// Run a Gibbs chain and store its samples.
    Fit(cmd::fit::FitArgs),
    /// Score fitted runs on their heldout fibers.
    Eval(cmd::eval::EvalArgs),
    /// Generate a synthetic tensor with known structure.
    Synth(cmd::synth::SynthArgs),
    /// Export the largest inferred classes of a run.
    Classes(cmd::classes::ClassesArgs),
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("ALLOCORE_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .with_context(|| format!("ALLOCORE_THREADS must be a positive integer, got {v:?}"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Ingest(a) => cmd::ingest::run(a),
        Command::Mask(a) => cmd::mask::run(a),
        Command::Fit(a) => cmd::fit::run(a),
        Command::Eval(a) => cmd::eval::run(a),
        Command::Synth(a) => cmd::synth::run(a),
        Command::Classes(a) => cmd::classes::run(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
