//! `retrogan` command-line driver.
//!
//! Exit codes: 0 on success, 1 on an internal error, 2 on a usage or input
//! error (bad flags, unreadable or malformed files, invalid configuration).
//! Reports go to files or standard output; diagnostics go to standard error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Cycle-consistent adversarial post-specialization of word embeddings.
#[derive(Parser, Debug)]
#[command(name = "retrogan", version, about, propagate_version = true)]
struct Cli {
    /// Log verbosity (error, warn, info, debug, trace); RUST_LOG also works.
    #[arg(long, global = true, default_value = "info")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model on paired distributional/specialized embeddings.
    Train(TrainArgs),
    /// Map a table through a trained X→Y generator.
    Postspecialize(PostspecializeArgs),
    /// Spearman correlation of a table against similarity benchmarks.
    Evaluate(EvaluateArgs),
    /// Most cosine-similar words to a query word.
    Neighbors(NeighborsArgs),
    /// Out-of-knowledge grid: retrain on growing samples of benchmark words.
    Ook(OokArgs),
    /// Loss ablation grid.
    Ablate(AblateArgs),
    /// Write a synthetic paired corpus with constraints and benchmarks.
    GenSynthetic(GenSyntheticArgs),
}

/// Inputs and training overrides shared by train, ook and ablate.
///
/// Precedence: flag, then run-config file, then preset. Unset flags leave
/// the file or preset value alone.
#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// Run-config TOML file ([train], [train.arch], [train.weights],
    /// [train.toggles], [data], [synthetic]).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Named preset: paper-default (lr 5e-5/1e-4, batch 32, 312,500
    /// batches, 2×2048 layers) or tuned (lr 0.00495/0.00885, 1 generator
    /// and 3 discriminator hidden layers).
    #[arg(long)]
    pub preset: Option<String>,
    /// Distributional embeddings (text format, optional header line).
    #[arg(long = "x")]
    pub x_embeddings: Option<PathBuf>,
    /// Specialized embeddings for the same words.
    #[arg(long = "y")]
    pub y_embeddings: Option<PathBuf>,
    /// Constraint file: one `word1 word2` pair or a single word per line.
    #[arg(long)]
    pub constraints: Option<PathBuf>,
    /// Benchmark as PATH or PATH:FORMAT (simlex, simverb, card660, tsv); repeatable.
    #[arg(long = "benchmark")]
    pub benchmarks: Vec<String>,
    /// Generate a synthetic corpus from the [synthetic] config section
    /// instead of reading embeddings; sets the model dimension to match.
    #[arg(long)]
    pub synthetic: bool,
    /// Output directory (created if missing).
    #[arg(long, short)]
    pub output: PathBuf,
    /// Seed for initialization, batching and synthetic data [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Training steps [paper-default: 312500].
    #[arg(long)]
    pub total_batches: Option<u64>,
    /// Mini-batch size [default: 32].
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Generator learning rate [paper-default: 5e-5].
    #[arg(long)]
    pub g_lr: Option<f64>,
    /// Discriminator learning rate [paper-default: 1e-4].
    #[arg(long)]
    pub d_lr: Option<f64>,
    /// Steps between validation snapshots; 0 evaluates only at the end [default: 1000].
    #[arg(long)]
    pub eval_every: Option<u64>,
    /// Conditional discriminator updates per step [default: 1].
    #[arg(long)]
    pub dis_train_amount: Option<usize>,
    /// Also train the plain discriminators D_X and D_Y [default: false].
    #[arg(long)]
    pub train_plain_discriminators: Option<bool>,
    /// Hidden width of every network [default: 2048].
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Parallel training jobs for grid commands [default: all cores].
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Args, Debug)]
pub struct PostspecializeArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Table to map; rows are L2-normalized first.
    #[arg(long)]
    pub input: PathBuf,
    /// Output table path.
    #[arg(long, short)]
    pub output: PathBuf,
    /// Rows per generator call.
    #[arg(long, default_value_t = 512)]
    pub batch_size: usize,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Embedding table to score.
    #[arg(long)]
    pub table: PathBuf,
    /// Benchmark as PATH or PATH:FORMAT; repeatable.
    #[arg(long = "dataset", required = true)]
    pub datasets: Vec<String>,
    /// Constraint file defining the disjoint/full split.
    #[arg(long)]
    pub constraints: Option<PathBuf>,
    /// Pairs to score: all, disjoint (neither word constrained) or full (both).
    #[arg(long, default_value = "all")]
    pub mode: String,
    /// Pairs with missing words: skip (drop and count) or zero (score 0).
    #[arg(long, default_value = "skip")]
    pub missing: String,
}

#[derive(Args, Debug)]
pub struct NeighborsArgs {
    #[arg(long)]
    pub table: PathBuf,
    #[arg(long)]
    pub word: String,
    /// Number of neighbors, the word itself included.
    #[arg(short, long, default_value_t = 10)]
    pub k: usize,
}

#[derive(Args, Debug)]
pub struct OokArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Comma-separated fractions of benchmark words in (0, 1].
    #[arg(long, value_delimiter = ',', default_values_t = retrogan::harness::DEFAULT_OOK_FRACTIONS)]
    pub fractions: Vec<f64>,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// toggle (one loss off per run) or one_by_one (cumulative removal).
    #[arg(long, default_value = "toggle")]
    pub mode: String,
}

#[derive(Args, Debug)]
pub struct GenSyntheticArgs {
    #[arg(long, short)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 2000)]
    pub vocab_size: usize,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 50)]
    pub clusters: usize,
    /// Pull of each specialized vector toward its cluster target, in [0, 1].
    #[arg(long, default_value_t = 0.5)]
    pub collapse: f64,
    /// Fraction of clusters paired as antonyms, in [0, 1].
    #[arg(long, default_value_t = 0.2)]
    pub antonyms: f64,
    /// Fraction of words left out of every constraint, in [0, 1).
    #[arg(long, default_value_t = 0.2)]
    pub holdout: f64,
    /// Noise norm around each cluster centroid.
    #[arg(long, default_value_t = 1.0)]
    pub spread: f64,
    /// Pairs per benchmark dataset.
    #[arg(long, default_value_t = 1000)]
    pub pairs: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .parse_default_env()
        .format_timestamp(None)
        .init();
    let result = match cli.command {
        Command::Train(a) => commands::train(&a.run),
        Command::Postspecialize(a) => commands::postspecialize(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Neighbors(a) => commands::neighbors(&a),
        Command::Ook(a) => commands::ook(&a),
        Command::Ablate(a) => commands::ablate(&a),
        Command::GenSynthetic(a) => commands::gen_synthetic(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", commands::describe(&e));
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
