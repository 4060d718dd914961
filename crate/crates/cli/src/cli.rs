//! Command-line grammar.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mage_core::eval::ReportFormat;

use crate::config::Preset;

#[derive(Parser, Debug)]
#[command(
    name = "mage",
    version,
    about = "Embedding-view augmentation, multi-head view attention and classification"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Clone, Debug, Default)]
pub struct GlobalArgs {
    /// TOML config file, or the manifest.json of an earlier run to replay it.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed of every model and of the benchmark plan.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads for the benchmark; results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    /// Use generated Gaussian clusters instead of record files.
    #[arg(long, global = true)]
    pub synthetic: bool,
    /// Hyperparameter base; defaults to `desk` with --synthetic, else `full`.
    #[arg(long, global = true, value_enum)]
    pub preset: Option<Preset>,
    /// Output directory [env: MAGE_OUTPUT_DIR].
    #[arg(long, global = true, value_name = "DIR")]
    pub output: Option<PathBuf>,
    /// Training records (JSONL or binary).
    #[arg(long, global = true, value_name = "PATH")]
    pub train: Option<PathBuf>,
    /// Test records (JSONL or binary).
    #[arg(long, global = true, value_name = "PATH")]
    pub test: Option<PathBuf>,
    /// Augmenter checkpoint directory [default: <output>/checkpoints].
    #[arg(long, global = true, value_name = "DIR")]
    pub checkpoints: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Validate record files and convert them to JSONL and binary.
    Ingest,
    /// Train the autoencoder, denoising autoencoder and VAE on the training split.
    TrainAug(TrainAugArgs),
    /// Write augmented views of the records using trained augmenters.
    Augment(AugmentArgs),
    /// Train one classifier configuration and score it on the test split.
    TrainClf(TrainClfArgs),
    /// Run the configuration matrix over the shuffle benchmark.
    Ablate(AblateArgs),
    /// Compare analytic gradients of every component with finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum Augmenter {
    Ae,
    Dae,
    Vae,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum ViewName {
    Original,
    Linear,
    Ae,
    Dae,
    Vae,
}

#[derive(Args, Debug)]
pub struct TrainAugArgs {
    /// Augmenters to train [default: all].
    #[arg(long, value_enum, value_delimiter = ',')]
    pub only: Vec<Augmenter>,
}

#[derive(Args, Debug)]
pub struct AugmentArgs {
    /// Views to write [default: linear,ae,dae,vae].
    #[arg(long, value_enum, value_delimiter = ',')]
    pub views: Vec<ViewName>,
}

#[derive(Args, Debug)]
pub struct TrainClfArgs {
    /// Configuration name such as `lstm/mage+dae` or `softmax/original`.
    #[arg(long, default_value = "lstm/mage+dae")]
    pub model: String,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    /// Configurations to run [default: all ten].
    #[arg(long, value_delimiter = ',')]
    pub configs: Vec<String>,
    /// Report format to write [default: both].
    #[arg(long, value_parser = parse_format)]
    pub format: Option<ReportFormat>,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Random configurations per component.
    #[arg(long, default_value_t = mage_core::verify::DEFAULT_CONFIGS_PER_COMPONENT)]
    pub per_component: usize,
    /// Largest accepted relative error.
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Components to check [default: all].
    #[arg(long, value_delimiter = ',')]
    pub components: Vec<String>,
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    s.parse().map_err(|e: mage_core::Error| e.to_string())
}
