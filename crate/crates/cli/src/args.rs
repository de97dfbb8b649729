use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "csae",
    version,
    about = "Convolutional supervised autoencoder toolkit"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model with alternating reconstruction/classification updates.
    Train(TrainArgs),
    /// Score a checkpoint on a labelled image set.
    Eval(EvalArgs),
    /// Write encoder outputs (or scatter data) as CSV.
    ExtractLatent(ExtractArgs),
    /// Fit k-NN, naive Bayes or an RBF SVM on latent codes (or raw pixels).
    ClassifyLatent(ClassifyArgs),
    /// Render the classifier's decision regions over a 2-D latent plane (PPM).
    VizBoundary(BoundaryArgs),
    /// Render a mosaic of images decoded from a 2-D latent grid (PGM).
    VizDecoderGrid(DecoderGridArgs),
    /// Run the finite-difference gradient-check suite.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Small28,
    Large128,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Joint,
    #[value(name = "head_only")]
    HeadOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Knn,
    Gnb,
    Svm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LatentFormat {
    /// `z0,..,label`
    Latent,
    /// `x0,..,true_label,predicted_label`
    Scatter,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// IDX image file (optionally gzip-compressed).
    #[arg(long)]
    pub images: PathBuf,
    /// IDX label file (optionally gzip-compressed).
    #[arg(long)]
    pub labels: PathBuf,
    /// Use only the first N samples of a seeded shuffle.
    #[arg(long)]
    pub subset: Option<usize>,
    /// Number of classes; inferred from the labels when omitted.
    #[arg(long)]
    pub classes: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value = "small28")]
    pub preset: Preset,
    #[arg(long, default_value_t = 10)]
    pub lambda: usize,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "joint")]
    pub update_mode: Mode,
    /// Build convolutions without bias terms.
    #[arg(long)]
    pub no_conv_bias: bool,
    /// Output checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Per-epoch report CSV; defaults to the checkpoint path plus `.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, alias = "test-images")]
    pub images: PathBuf,
    #[arg(long, alias = "test-labels")]
    pub labels: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "latent")]
    pub format: LatentFormat,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub test_images: PathBuf,
    #[arg(long)]
    pub test_labels: PathBuf,
    /// Required unless --raw is given.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Classify standardized raw pixels instead of latent codes.
    #[arg(long)]
    pub raw: bool,
    #[arg(long, value_enum, default_value = "knn")]
    pub method: MethodArg,
    /// Neighbours for k-NN.
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long)]
    pub standardize_latent: bool,
    /// Seeds the subset shuffle and SVM pair selection.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Optional predictions CSV (`true_label,predicted_label`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BoundaryArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Images whose latent codes define the plotted extent.
    #[arg(long, alias = "test-images")]
    pub images: PathBuf,
    /// With labels, the encoded points are overlaid in their true class colour.
    #[arg(long, alias = "test-labels")]
    pub labels: Option<PathBuf>,
    /// Pixels per axis.
    #[arg(long, default_value_t = 400)]
    pub resolution: usize,
    #[arg(long)]
    pub overlay: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecoderGridArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Images whose latent codes define the sampled extent.
    #[arg(long, alias = "test-images")]
    pub images: PathBuf,
    /// Tiles per axis.
    #[arg(long, default_value_t = 10)]
    pub resolution: usize,
    /// Tile side in pixels; defaults to the model's input side.
    #[arg(long)]
    pub tile: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Random instances per layer.
    #[arg(long, default_value_t = 20)]
    pub seeds: u64,
}
