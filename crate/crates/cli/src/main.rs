//! `relu-zono`: dataset generation, training by region search, and the
//! analyses around it.
//!
//! Datasets travel as JSON documents on stdin/stdout, so commands chain:
//!
//! ```text
//! relu-zono gen d1 --epsilon 0 | relu-zono solve exact --m 1 --loss l1 --v 1
//! ```

mod analyze;
mod bench;
mod gen;
mod io;
mod solve;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "relu-zono", version, about = "Shallow ReLU training by search over activation regions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset.
    #[command(subcommand)]
    Gen(gen::GenCommand),
    /// Build datasets from external files.
    #[command(subcommand)]
    Ingest(gen::IngestCommand),
    /// Train a network.
    Solve(solve::SolveArgs),
    /// Inspect the chamber structure of a dataset.
    #[command(subcommand)]
    Analyze(analyze::AnalyzeCommand),
    /// Run experiment grids.
    #[command(subcommand)]
    Bench(bench::BenchCommand),
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors.
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Gen(cmd) => gen::run(cmd),
        Command::Ingest(cmd) => gen::ingest(cmd),
        Command::Solve(args) => solve::run(args),
        Command::Analyze(cmd) => analyze::run(cmd),
        Command::Bench(cmd) => bench::run(cmd),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = serde_json::json!({ "error": e.kind(), "detail": e.to_string() });
            eprintln!("{report}");
            ExitCode::from(1)
        }
    }
}
