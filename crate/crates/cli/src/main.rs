//! `rdgcn` command-line tool.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "rdgcn", version, about = "Distance- and type-weighted dependency GCN for aspect sentiment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dump distance, type and topology views of every sentence as JSON lines.
    BuildGraph(BuildGraphArgs),
    /// Write the distance weight curve as CSV.
    Curve(CurveArgs),
    /// Train a model and write checkpoint, metrics, bandit trace and manifest.
    Train(Box<TrainArgs>),
    /// Score a checkpoint on a dataset.
    Evaluate(EvaluateArgs),
    /// Compare analytic and finite-difference gradients.
    GradCheck(GradCheckArgs),
    /// Cross-check BFS tree distances against Floyd-Warshall.
    OracleDist(OracleDistArgs),
    /// Write the built-in synthetic corpus as JSONL.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct BuildGraphArgs {
    #[arg(long)]
    conllu: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Distance cap.
    #[arg(long = "T", default_value_t = 10)]
    t: u32,
}

#[derive(Args, Debug)]
struct CurveArgs {
    /// combined, linear_cut, power_only or exp_only.
    #[arg(long, default_value = "combined")]
    variant: String,
    #[arg(long = "K", default_value_t = 0.1)]
    k: f64,
    #[arg(long = "T", default_value_t = 10)]
    t: u32,
    #[arg(long)]
    out: PathBuf,
}

/// Hyperparameters. Unset flags keep their defaults, or the checkpoint's
/// values when resuming.
#[derive(Args, Debug)]
struct HyperArgs {
    #[arg(long = "T")]
    t: Option<u32>,
    #[arg(long = "K0")]
    k0: Option<f64>,
    #[arg(long = "S")]
    s: Option<f64>,
    #[arg(long = "R")]
    r: Option<usize>,
    /// Batches per bandit reward interval.
    #[arg(long)]
    interval: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Hidden size.
    #[arg(long = "D")]
    d: Option<usize>,
    /// Embedding size (defaults to the hidden size).
    #[arg(long = "embed-dim")]
    embed_dim: Option<usize>,
    /// Graph convolution layers.
    #[arg(long = "L")]
    l: Option<usize>,
    #[arg(long = "dropout-in")]
    dropout_in: Option<f64>,
    #[arg(long = "dropout-out")]
    dropout_out: Option<f64>,
    #[arg(long, env = "RDGCN_SEED")]
    seed: Option<u64>,
    /// full, no_dis, no_type or eq2_control.
    #[arg(long)]
    mode: Option<String>,
    /// Reward the bandit with test accuracy instead of validation accuracy.
    #[arg(long = "reward-on-test")]
    reward_on_test: bool,
    #[arg(long = "val-frac")]
    val_frac: Option<f64>,
    #[arg(long = "row-normalize")]
    row_normalize: bool,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Training JSONL.
    #[arg(long, required_unless_present_any = ["synthetic"])]
    train: Option<PathBuf>,
    /// Test JSONL.
    #[arg(long, required_unless_present_any = ["synthetic"])]
    test: Option<PathBuf>,
    /// CoNLL-U trees aligned with --train rows.
    #[arg(long)]
    train_conllu: Option<PathBuf>,
    /// CoNLL-U trees aligned with --test rows.
    #[arg(long)]
    test_conllu: Option<PathBuf>,
    /// Use the built-in synthetic corpus.
    #[arg(long, conflicts_with_all = ["train", "test", "train_conllu", "test_conllu"])]
    synthetic: bool,
    /// Generator seed for --synthetic.
    #[arg(long, default_value_t = 0)]
    synthetic_seed: u64,
    /// Continue from a checkpoint; --epochs sets the new total.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    hyper: HyperArgs,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, required_unless_present = "synthetic")]
    test: Option<PathBuf>,
    #[arg(long)]
    test_conllu: Option<PathBuf>,
    /// Score the test split of the built-in synthetic corpus.
    #[arg(long, conflicts_with_all = ["test", "test_conllu"])]
    synthetic: bool,
    #[arg(long, default_value_t = 0)]
    synthetic_seed: u64,
    /// Report path; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GradCheckArgs {
    #[arg(long, env = "RDGCN_SEED", default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    sentences: usize,
    #[arg(long, default_value_t = 6)]
    max_tokens: usize,
    #[arg(long, default_value_t = 6)]
    embed_dim: usize,
    #[arg(long = "D", default_value_t = 8)]
    d: usize,
    #[arg(long = "L", default_value_t = 2)]
    l: usize,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[arg(long = "no-type")]
    no_type: bool,
    #[arg(long = "row-normalize")]
    row_normalize: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Perturb one analytic gradient entry before comparison.
    #[arg(long, hide = true)]
    inject_fault: bool,
}

#[derive(Args, Debug)]
struct OracleDistArgs {
    #[arg(long = "max-n", default_value_t = 12)]
    max_n: usize,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, env = "RDGCN_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Add one to a BFS distance in every tree.
    #[arg(long, hide = true)]
    inject_off_by_one: bool,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 2000)]
    train: usize,
    #[arg(long, default_value_t = 500)]
    test: usize,
    #[arg(long, env = "RDGCN_SEED", default_value_t = 0)]
    seed: u64,
    /// Output directory for train.jsonl and test.jsonl.
    #[arg(long)]
    out: PathBuf,
}

/// Failure classes mapped to exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Failure {
    Input,
    Internal,
}

impl Failure {
    fn code(self) -> u8 {
        match self {
            Failure::Input => 1,
            Failure::Internal => 2,
        }
    }

    fn tag(self) -> &'static str {
        match self {
            Failure::Input => "input",
            Failure::Internal => "internal",
        }
    }
}

fn classify(err: &anyhow::Error) -> Failure {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<rdgcn::Error>() {
            return if e.is_input_error() { Failure::Input } else { Failure::Internal };
        }
        if cause.downcast_ref::<commands::CheckFailed>().is_some() {
            return Failure::Internal;
        }
        if cause.downcast_ref::<std::io::Error>().is_some() || cause.downcast_ref::<serde_json::Error>().is_some() {
            return Failure::Input;
        }
    }
    Failure::Internal
}

fn report(kind: Failure, msg: &str) -> ExitCode {
    let line = msg.split_whitespace().collect::<Vec<_>>().join(" ");
    eprintln!("error[{}]: {line}", kind.tag());
    ExitCode::from(kind.code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let body = text.split("Usage:").next().unwrap_or_default();
            return report(Failure::Input, body.trim_start_matches("error: "));
        }
    };
    let result = match cli.command {
        Command::BuildGraph(a) => commands::build_graph(a),
        Command::Curve(a) => commands::curve(a),
        Command::Train(a) => commands::train(*a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::GradCheck(a) => commands::grad_check(a),
        Command::OracleDist(a) => commands::oracle_dist(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(classify(&e), &format!("{e:#}")),
    }
}
