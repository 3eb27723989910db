//! Argument parsing and command implementations behind the `setrank` binary.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error.

mod commands;
mod config;

pub use commands::run;
pub use config::FileConfig;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "setrank", version, about = "Boolean set-operation retrieval experiments")]
pub struct Cli {
    /// TOML file with default values; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate AND/OR/NOT triplet training data.
    GenData(GenDataArgs),
    /// Generate a synthetic corpus with judged Boolean queries.
    GenBench(GenBenchArgs),
    /// Run phase 1 (encoder) or phase 2 (dual encoder) training.
    Train(TrainArgs),
    /// Embed a corpus into a dense index file.
    Index(IndexArgs),
    /// Search a corpus with a dense, BM25 or oracle retriever.
    Search(SearchArgs),
    /// Evaluate retrievers on judged queries.
    Eval(EvalArgs),
    /// Run the full comparison and write every artifact.
    Experiment(ExperimentArgs),
    /// Re-render a saved report.json.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct GenOpts {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Vocabulary TSV; the built-in vocabulary when omitted.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub per_op: Option<usize>,
    #[arg(long)]
    pub positives: Option<usize>,
    #[arg(long)]
    pub negatives: Option<usize>,
    #[arg(long)]
    pub split_ratio: Option<f64>,
    #[arg(long)]
    pub docs: Option<usize>,
    #[arg(long)]
    pub queries_per_template: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub gen: GenOpts,
    /// Output directory for triplets_train.jsonl and triplets_eval.jsonl.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenBenchArgs {
    #[command(flatten)]
    pub gen: GenOpts,
    /// Output directory for corpus.jsonl and queries.jsonl.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ModelOpts {
    #[arg(long)]
    pub dim: Option<usize>,
    /// Hash buckets of the tokenizer (a power of two).
    #[arg(long)]
    pub buckets: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainOpts {
    #[arg(long)]
    pub seed: Option<u64>,
    /// inversed_contrastive, triplet or contrastive.
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    /// Phase-2 update budget.
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Phase {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub phase: Phase,
    #[command(flatten)]
    pub model: ModelOpts,
    #[command(flatten)]
    pub train: TrainOpts,
    /// Starting checkpoint; a fresh seeded encoder when omitted.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Phase 1: training triplets.
    #[arg(long)]
    pub train_data: Option<PathBuf>,
    /// Phase 1: held-out triplets for checkpoint selection.
    #[arg(long)]
    pub eval_data: Option<PathBuf>,
    /// Phase 2: corpus the judged queries refer to.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub queries_train: Option<PathBuf>,
    #[arg(long)]
    pub queries_dev: Option<PathBuf>,
    /// Where to write the best checkpoint.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional TSV log of train and eval loss per step.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SearchMode {
    Dense,
    Bm25,
    Oracle,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long, value_enum, default_value = "dense")]
    pub mode: SearchMode,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Dense mode: index built by `index`.
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Dense mode: checkpoint whose query encoder embeds the query.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// BM25 mode: tokenizer buckets.
    #[arg(long)]
    pub buckets: Option<usize>,
    #[arg(short, long, default_value_t = 10)]
    pub k: usize,
    pub query: String,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    /// Dense retriever as NAME=CHECKPOINT; repeatable.
    #[arg(long = "dense", value_name = "NAME=CHECKPOINT")]
    pub dense: Vec<String>,
    #[arg(long)]
    pub bm25: bool,
    #[arg(long)]
    pub oracle: bool,
    #[arg(long)]
    pub buckets: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub gen: GenOpts,
    #[command(flatten)]
    pub model: ModelOpts,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub phase2_batch_size: Option<usize>,
    #[arg(long)]
    pub phase2_lr: Option<f64>,
    /// Judged queries per template used for phase-2 training.
    #[arg(long)]
    pub train_queries: Option<usize>,
    /// Judged queries per template used for phase-2 checkpoint selection.
    #[arg(long)]
    pub dev_queries: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Md,
    Tsv,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "md")]
    pub format: Format,
    /// Print the loss-mode ablation table instead of the full report.
    #[arg(long)]
    pub ablation: bool,
}

/// Parses `args` (program name first) and runs the command, mapping the
/// outcome to the process exit code.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// Runs one command in-process, e.g. `run_args(&["experiment", "--out", "x"])`.
pub fn run_args(args: &[&str]) -> anyhow::Result<()> {
    let cli = Cli::try_parse_from(std::iter::once("setrank").chain(args.iter().copied()))?;
    run(cli)
}
