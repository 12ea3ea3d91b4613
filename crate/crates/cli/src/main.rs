//! Command line front end for the decompilation pipeline.
//!
//! Exit codes: 0 when the command succeeded (for `run`, when the success
//! threshold was reached), 1 for configuration or usage errors, 2 for I/O
//! errors and damaged files, 3 when the pipeline ran fine but came back
//! without the asked-for result (a run below threshold, a snippet no
//! hypothesis could solve, a replay that contradicts its report).

mod commands;
mod config;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Outcome classes the process exposes through its exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, bad config file, malformed inputs: exit 1.
    Config(String),
    /// Missing or unreadable files, damaged checkpoints: exit 2.
    Io(String),
    /// The pipeline finished without the asked-for result: exit 3.
    Unfinished(String),
}

impl From<relift::driver::ConfigError> for Failure {
    fn from(e: relift::driver::ConfigError) -> Failure {
        match e {
            relift::driver::ConfigError::Invalid(m) => Failure::Config(m),
            relift::driver::ConfigError::Io(e) => Failure::Io(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "relift", version, about = "Neural decompiler for a small imperative language")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic dataset of (assembly, source) pairs.
    Gen(GenArgs),
    /// Train in a loop until the given inputs are decompiled.
    Run(RunArgs),
    /// Decompile one assembly snippet with a saved model.
    Decompile(DecompileArgs),
    /// Measure a model on a dataset, or replay a finished run directory.
    Eval(EvalArgs),
    /// Turn verified decompilations into rewrite rules.
    ExtractRules(ExtractRulesArgs),
}

/// Loop and model knobs shared by `gen` and `run`. Every flag mirrors a
/// `key=value` entry of the config file; flags win over the file, the file
/// wins over the preset.
#[derive(Args, Debug, Clone, Default)]
struct Knobs {
    /// Baseline configuration: `desk` (small) or `paper` (full size).
    #[arg(long, default_value = "desk")]
    preset: String,
    /// `key=value` file applied over the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Random training pairs generated before the first iteration.
    #[arg(long)]
    initial_train: Option<usize>,
    /// Fresh random pairs added at every later iteration.
    #[arg(long)]
    per_iter_train: Option<usize>,
    #[arg(long)]
    val_target: Option<usize>,
    /// Survival probability of an existing random pair at each extension.
    #[arg(long)]
    keep_fraction: Option<f64>,
    /// Stop once this percentage of inputs is decompiled.
    #[arg(long)]
    success_threshold: Option<f64>,
    /// Stop after this many consecutive iterations without a new success.
    #[arg(long)]
    patience_iters: Option<usize>,
    /// Hard cap on iterations; `none` leaves the loop open ended.
    #[arg(long)]
    iteration_limit: Option<String>,
    /// Beam width used when translating inputs.
    #[arg(long)]
    beam: Option<usize>,
    /// Worker threads for the translate-and-verify phase.
    #[arg(long)]
    threads: Option<usize>,
    /// Compile with (`true`) or without (`false`) optimizations.
    #[arg(long)]
    optimize: Option<bool>,
    /// Grammar hardness level, 1..=8.
    #[arg(long)]
    level: Option<u8>,
    #[arg(long)]
    max_statements: Option<usize>,
    #[arg(long)]
    max_expr_depth: Option<usize>,
    #[arg(long)]
    num_variables: Option<usize>,
    #[arg(long)]
    number_range_max: Option<i32>,
    /// LSTM hidden size.
    #[arg(long)]
    hidden: Option<usize>,
    /// Token embedding size.
    #[arg(long)]
    embedding: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    /// Validate every this many training batches.
    #[arg(long)]
    validate_every: Option<usize>,
    /// Validations without improvement before training stops.
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    knobs: Knobs,
    /// Output JSONL path, one pair per line.
    #[arg(long)]
    out: PathBuf,
    /// Pairs to generate; defaults to the configured initial_train.
    #[arg(long)]
    count: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    knobs: Knobs,
    /// File with one assembly snippet per line.
    #[arg(long)]
    inputs: PathBuf,
    /// Directory for checkpoints, datasets and the iteration report.
    #[arg(long)]
    run_dir: PathBuf,
    /// Start from this model instead of fresh weights.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct DecompileArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Assembly snippet, e.g. "movl 5 , eax ; movl eax , x ;".
    snippet: String,
    /// Beam width; defaults to the width the model was trained with.
    #[arg(long)]
    beam: Option<usize>,
    /// Compile with (`true`) or without (`false`) optimizations.
    #[arg(long)]
    optimize: Option<bool>,
    /// Show the canonical input, every hypothesis, templates and repairs.
    #[arg(long)]
    verbose: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Model to evaluate; required with --dataset.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// JSONL dataset of (assembly, source) pairs.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Replay a finished run directory and check its report.
    #[arg(long)]
    run_dir: Option<PathBuf>,
    #[arg(long)]
    beam: Option<usize>,
    /// Compile with (`true`) or without (`false`) optimizations.
    #[arg(long)]
    optimize: Option<bool>,
}

#[derive(Args)]
struct ExtractRulesArgs {
    /// JSONL lines with "input" and "decompiled" fields.
    #[arg(long)]
    successes: PathBuf,
    /// Output JSONL path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Compile with (`true`) or without (`false`) optimizations.
    #[arg(long)]
    optimize: Option<bool>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Run(a) => commands::run(a),
        Command::Decompile(a) => commands::decompile(a),
        Command::Eval(a) => commands::eval(a),
        Command::ExtractRules(a) => commands::extract_rules(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (code, message) = match f {
                Failure::Config(m) => (1, m),
                Failure::Io(m) => (2, m),
                Failure::Unfinished(m) => (3, m),
            };
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}
