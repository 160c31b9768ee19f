use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use shgt_core::{RecallDenominator, SplitPart, Variant};

#[derive(Debug, Parser)]
#[command(
    name = "shgt",
    version,
    about = "Hypergraph transformer for next-visit diagnosis prediction"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic cohort in the corpus text format.
    Generate(GenerateArgs),
    /// Train one or more models and write checkpoints, logs and manifests.
    Train(TrainArgs),
    /// Score a checkpoint on one split of a corpus.
    Eval(EvalArgs),
    /// Compare analytic gradients with central finite differences.
    Gradcheck(GradcheckArgs),
    /// Turn a training log into a CSV table and SVG curves.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Generator spec (`key = value` per line).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct MetricArgs {
    /// Comma-separated recall cut-offs, e.g. `10,20`.
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub recall_denominator: Option<RecallDenominator>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output directory. Multi-run modes create one subdirectory per run.
    #[arg(long)]
    pub out: PathBuf,
    /// Model seed; with `--seeds N` the first of `N` consecutive seeds.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of seeds to run and summarise as mean ± std.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    /// Seed of the patient split; overrides `split_seed` in the config.
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// Comma-separated variants (`wo-S`, `wo-T`, `wo-L`) run next to the full model.
    #[arg(long, value_delimiter = ',')]
    pub ablate: Option<Vec<Variant>>,
    /// One hyperparameter sweep such as `layers=1..4` or `alpha=0,0.1..0.5`.
    #[arg(long)]
    pub sweep: Option<String>,
    /// Run independent runs on worker threads.
    #[arg(long)]
    pub parallel: bool,
    #[command(flatten)]
    pub metrics: MetricArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: SplitPart,
    /// Report file; defaults to `eval_<split>.txt` next to the checkpoint.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub metrics: MetricArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Fault {
    SignFlip,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Model keys (`dim`, `layers`, `alpha`, `variant`, `seed`); dropout is always off.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Corpus to build the hypergraph from; a small built-in cohort otherwise.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Coordinates to sample; 0 checks every parameter.
    #[arg(long, default_value_t = 200)]
    pub coords: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub tolerance: f64,
    /// Redraw all parameters uniformly from `[-p, p]` before checking; 0 keeps the initialisation.
    #[arg(long, default_value_t = 1.0)]
    pub perturb: f64,
    #[arg(long, hide = true, value_enum)]
    pub inject_fault: Option<Fault>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// `train_log.jsonl` written by `train`.
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}
