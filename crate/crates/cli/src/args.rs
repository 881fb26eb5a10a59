use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use saeprobe::synth::DEFAULT_SYNTH_SEED;
use saeprobe::{PoolingStrategy, TokenRole};

/// Sparse-autoencoder concept analysis and subspace-removal retrieval
/// diagnostics for multimodal embeddings.
///
/// Every stage seed is derived from the master `--seed` as
/// `derive_seed(seed, label)` with the labels `synth`, `train/init` and
/// `train/shuffle`. Global flags can also be set through `SAEPROBE_*`
/// environment variables.
#[derive(Debug, Parser)]
#[command(name = "saeprobe", version, propagate_version = true)]
pub struct Cli {
    /// Master seed for the whole pipeline.
    #[arg(long, global = true, env = "SAEPROBE_SEED", default_value_t = DEFAULT_SYNTH_SEED)]
    pub seed: u64,

    /// Worker threads for parallel stages (defaults to all cores).
    #[arg(long, global = true, env = "SAEPROBE_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic paired corpus with planted concepts.
    Synth(SynthArgs),
    /// Train a Top-K sparse autoencoder on activation shards.
    Train(TrainArgs),
    /// Compute per-concept statistics over pooled sample codes.
    Analyze(AnalyzeArgs),
    /// Build a removal subspace from top-attribution dictionary atoms.
    Intervene(InterveneArgs),
    /// Run a retrieval task, optionally with the removal applied.
    Eval(EvalArgs),
    /// Convert an analysis or evaluation output to CSV or JSON.
    Report(ReportArgs),
    /// Check shards, task specs, checkpoints and subspaces.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run directory receiving outputs and the config echo.
    #[arg(long)]
    pub out: PathBuf,

    /// JSON file with settings for this subcommand; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    /// Planted dictionary size.
    #[arg(long)]
    pub c_true: Option<usize>,
    /// Activation dimension.
    #[arg(long = "dim")]
    pub d: Option<usize>,
    /// Active planted concepts per sample.
    #[arg(long)]
    pub k_true: Option<usize>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// Number of image-text pairs.
    #[arg(long = "pairs")]
    pub n_samples: Option<usize>,
    #[arg(long)]
    pub shared_fraction: Option<f64>,
    #[arg(long)]
    pub text_bias_beta: Option<f64>,
    /// Text-side nuisance magnitude.
    #[arg(long = "nuisance")]
    pub nuisance_strength: Option<f64>,
    /// Image-side nuisance magnitude relative to the text side.
    #[arg(long)]
    pub image_nuisance_ratio: Option<f64>,
    #[arg(long)]
    pub tokens_per_sample: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Small dictionary for laptop-scale runs.
    Desk,
    /// Multimodal LLM hidden states (width 32768).
    Mllm,
    /// Contrastive VLM embeddings (width 7168).
    Vlm,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Activation shards to train on.
    #[arg(long, required = true, num_args = 1..)]
    pub shards: Vec<PathBuf>,
    /// Preset supplying defaults for every omitted setting.
    #[arg(long, value_enum, env = "SAEPROBE_PROFILE", default_value_t = Profile::Desk)]
    pub profile: Profile,
    /// Dictionary width c.
    #[arg(long)]
    pub width: Option<usize>,
    /// Active concepts per code.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long = "batch")]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// ℓ1 weight on codes.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Shuffle buffer capacity in tokens.
    #[arg(long = "buffer")]
    pub buffer_capacity: Option<usize>,
    /// Train on globally rescaled inputs.
    #[arg(long)]
    pub standardize: bool,
    /// Resolve and echo the settings without training.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Pooling {
    Mean,
    LastToken,
}

impl From<Pooling> for PoolingStrategy {
    fn from(p: Pooling) -> Self {
        match p {
            Pooling::Mean => PoolingStrategy::Mean,
            Pooling::LastToken => PoolingStrategy::LastToken,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Role {
    Image,
    Prompt,
    Content,
    Special,
}

impl From<Role> for TokenRole {
    fn from(r: Role) -> Self {
        match r {
            Role::Image => TokenRole::Image,
            Role::Prompt => TokenRole::Prompt,
            Role::Content => TokenRole::Content,
            Role::Special => TokenRole::Special,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Weighting {
    Uniform,
    CodeSimilarity,
}

#[derive(Debug, Args)]
pub struct PoolArgs {
    #[arg(long, value_enum)]
    pub pooling: Option<Pooling>,
    /// Token roles to drop before pooling (repeatable or comma-separated).
    #[arg(long, value_enum, value_delimiter = ',')]
    pub mask: Option<Vec<Role>>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub common: Common,
    /// Checkpoint directory written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, required = true, num_args = 1..)]
    pub shards: Vec<PathBuf>,
    /// Task spec whose qrels define the matched image-text pairs.
    #[arg(long)]
    pub task: PathBuf,
    #[command(flatten)]
    pub pool: PoolArgs,
    /// Fraction of concepts in each top set.
    #[arg(long)]
    pub fraction: Option<f64>,
    #[arg(long)]
    pub activity_epsilon: Option<f64>,
    #[arg(long, value_enum)]
    pub weighting: Option<Weighting>,
    /// Points on the modality-score density grid.
    #[arg(long)]
    pub density_grid: Option<usize>,
    /// KDE bandwidth (Silverman's rule when omitted).
    #[arg(long)]
    pub bandwidth: Option<f64>,
}

#[derive(Debug, Args)]
pub struct InterveneArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// `stats.json` written by `analyze`.
    #[arg(long)]
    pub stats: PathBuf,
    /// Fraction of concepts (by attribution) spanning the subspace.
    #[arg(long)]
    pub fraction: Option<f64>,
    /// Keep exactly this many singular directions.
    #[arg(long, conflicts_with = "energy")]
    pub rank: Option<usize>,
    /// Keep the fewest directions reaching this share of squared singular mass.
    #[arg(long)]
    pub energy: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Sides {
    Both,
    Queries,
    Candidates,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, required = true, num_args = 1..)]
    pub shards: Vec<PathBuf>,
    #[arg(long)]
    pub task: PathBuf,
    /// Subspace directory written by `intervene`.
    #[arg(long)]
    pub subspace: Option<PathBuf>,
    #[command(flatten)]
    pub pool: PoolArgs,
    /// Cutoffs for Recall@K.
    #[arg(long = "k", value_delimiter = ',')]
    pub ks: Option<Vec<usize>>,
    /// Which side(s) the removal applies to.
    #[arg(long, value_enum)]
    pub sides: Option<Sides>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// `stats.json` from `analyze` or `report.json` from `eval`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Write here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Shard files, task-spec JSON files, checkpoint or subspace directories.
    #[arg(required = true)]
    pub paths: Vec<PathBuf>,
}
