//! `mast`: build action graphs, evaluate predictors and simulate
//! automation on dialogue corpora.

mod commands;
mod config;
mod error;

use clap::{Parser, Subcommand};

use commands::{
    BuildGraphArgs, EvaluateArgs, ExportFeaturesArgs, IngestArgs, PredictArgs, SimulateArgs,
};

/// Multi-step action state tracking for task-oriented dialogue.
///
/// Exit codes: 0 success, 1 invalid input or config, 2 run failure.
#[derive(Debug, Parser)]
#[command(name = "mast", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a corpus, optionally rewrite it canonically, print statistics
    Ingest(IngestArgs),
    /// Build one transition graph per policy from training workflows
    BuildGraph(BuildGraphArgs),
    /// Score a predictor's top-1 sequences and graphs against ground truth
    Evaluate(EvaluateArgs),
    /// Replay conversations with one-step or multi-step suggestions
    Simulate(SimulateArgs),
    /// Write per-split future-action features and remaining-dialogue targets
    ExportFeatures(ExportFeaturesArgs),
    /// Predict the future actions of a single dialogue context
    Predict(PredictArgs),
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = match &cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::BuildGraph(a) => commands::build_graph(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::ExportFeatures(a) => commands::export_features(a),
        Command::Predict(a) => commands::predict(a),
    };
    if let Err(e) = result {
        eprintln!("mast: {e}");
        std::process::exit(e.exit_code());
    }
}
