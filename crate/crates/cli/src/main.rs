//! `lrfmp` command-line front end.

mod commands;
mod manifest;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{EvalArgs, MakeModelArgs, MakeOrbitArgs, SolveArgs, SweepArgs, SynthArgs};

#[derive(Debug, Parser)]
#[command(name = "lrfmp", version, about = "Greedy regularized downward continuation of satellite potential data")]
struct Cli {
    /// Cap on worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize a noisy dataset from a coefficient model along an orbit.
    Synth(SynthArgs),
    /// Run the greedy solver on a dataset.
    Solve(SolveArgs),
    /// Evaluate an expansion against a reference model on a surface grid.
    Eval(EvalArgs),
    /// Solve for several regularization parameters and tabulate the errors.
    Sweep(SweepArgs),
    /// Repeat the run recorded in a manifest and check its artifacts.
    Rerun {
        #[arg(long)]
        manifest: std::path::PathBuf,
    },
    /// Write a seeded random coefficient model.
    MakeModel(MakeModelArgs),
    /// Write a synthetic near-polar orbit track.
    MakeOrbit(MakeOrbitArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match cli.command {
        Command::Synth(a) => commands::run(manifest::CommandSpec::Synth(a), cli.threads),
        Command::Solve(a) => commands::run(manifest::CommandSpec::Solve(a), cli.threads),
        Command::Eval(a) => commands::run(manifest::CommandSpec::Eval(a), cli.threads),
        Command::Sweep(a) => commands::run(manifest::CommandSpec::Sweep(a), cli.threads),
        Command::MakeModel(a) => commands::run(manifest::CommandSpec::MakeModel(a), cli.threads),
        Command::MakeOrbit(a) => commands::run(manifest::CommandSpec::MakeOrbit(a), cli.threads),
        Command::Rerun { manifest } => commands::rerun(&manifest, cli.threads),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
