use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "tsrcdf", version, about = "Requirement-pair conflict detection: encode, train, evaluate, transfer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    /// Deterministic hashed bag-of-words vectors.
    Hash,
    /// Pre-computed vectors in `<cache>/a.vec` and `<cache>/b.vec`.
    File,
    /// Encoder sidecar over HTTP.
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FusionArg {
    Six,
    Three,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RoleArg {
    A,
    B,
}

#[derive(Debug, Clone, Args)]
pub struct EncoderArgs {
    #[arg(long, value_enum, default_value_t = ProviderKind::Hash)]
    pub provider: ProviderKind,
    #[arg(long, env = "TSRCDF_ENCODER_URL")]
    pub encoder_url: Option<String>,
    /// Directory holding the per-role vector caches `a.vec` and `b.vec`.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Vector dimension of the hash provider (default 64).
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, value_enum)]
    pub fusion: Option<FusionArg>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// JSON run configuration; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run seed (default 42).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write one vector per distinct sentence into a vector store.
    Encode {
        #[arg(long, required = true)]
        dataset: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = RoleArg::A)]
        role: RoleArg,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        encoder: EncoderArgs,
    },
    /// Train a classifier on a whole dataset and save its checkpoint.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch JSONL training log.
        #[arg(long)]
        log: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        encoder: EncoderArgs,
    },
    /// Score a saved checkpoint on a labelled dataset.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        encoder: EncoderArgs,
    },
    /// Stratified k-fold cross-validation, or just the fold assignment.
    Folds {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        plan_only: bool,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        encoder: EncoderArgs,
    },
    /// Cross-domain transfer over target folds.
    Transfer {
        /// JSON plan: source, target, n_folds, encoder_mode, train_config, seed.
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long)]
        source: Vec<PathBuf>,
        #[arg(long)]
        target: Option<PathBuf>,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long, conflicts_with = "finetune")]
        frozen: bool,
        #[arg(long)]
        finetune: bool,
        /// Also run the target-only baseline.
        #[arg(long)]
        baseline: bool,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        encoder: EncoderArgs,
    },
    /// Macro and weighted summary table over result files.
    Report {
        /// Result file, optionally as `NAME=PATH`.
        #[arg(long, required = true)]
        input: Vec<String>,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}
