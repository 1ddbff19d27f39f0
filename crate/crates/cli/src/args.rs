use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "microspot",
    version,
    about = "Micro-movement spotting in high-speed face video"
)]
pub struct Cli {
    /// Pipeline configuration (TOML). Flags override it.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Worker threads for parallel stages. Defaults to all cores.
    #[arg(long, global = true, value_name = "N", value_parser = clap::value_parser!(u32).range(1..))]
    pub jobs: Option<u32>,

    /// Seed for synthetic data and network training.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic dataset with planted movements.
    Synth(SynthArgs),
    /// Write each video's windows, alignment and regions of interest as JSON.
    Preprocess(PreprocessArgs),
    /// Compute HOOF feature caches for every video of a dataset.
    ExtractFeatures(ExtractArgs),
    /// Train a classifier on cached features and ground-truth labels.
    Train(TrainArgs),
    /// Score every window with a trained model and write detections.
    Spot(SpotArgs),
    /// Leave-one-subject-out evaluation with metrics and ROC.
    Evaluate(EvaluateArgs),
    /// Run the annotation service.
    Serve(ServeArgs),
    /// Talk to a running annotation service.
    Review(ReviewArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long)]
    pub subjects: Option<usize>,
    #[arg(long)]
    pub videos: Option<usize>,
    #[arg(long)]
    pub frames: Option<usize>,
    /// Planted movements per video.
    #[arg(long)]
    pub movements: Option<usize>,
    /// Peak displacement in pixels.
    #[arg(long)]
    pub amplitude: Option<f64>,
    /// Pixel noise standard deviation, intensities in [0, 1].
    #[arg(long)]
    pub noise: Option<f64>,
}

/// Dataset location: a manifest file or the directory holding it.
#[derive(Debug, Args)]
pub struct DatasetArg {
    #[arg(long, value_name = "PATH")]
    pub dataset: PathBuf,
}

#[derive(Debug, Args, Default)]
pub struct WindowFlags {
    #[arg(long)]
    pub window_sec: Option<f64>,
    #[arg(long)]
    pub overlap_sec: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct FeatureFlags {
    #[command(flatten)]
    pub window: WindowFlags,
    #[arg(long)]
    pub flow_alpha: Option<f64>,
    #[arg(long)]
    pub flow_iters: Option<usize>,
    #[arg(long)]
    pub flow_tol: Option<f64>,
    #[arg(long)]
    pub flow_sigma: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct TrainFlags {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// `none`, `balanced` or `negative,positive`.
    #[arg(long)]
    pub class_weights: Option<String>,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[command(flatten)]
    pub dataset: DatasetArg,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[command(flatten)]
    pub window: WindowFlags,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[command(flatten)]
    pub dataset: DatasetArg,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[command(flatten)]
    pub features: FeatureFlags,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub dataset: DatasetArg,
    #[arg(long, value_name = "DIR")]
    pub features: PathBuf,
    /// Checkpoint path; the JSON sidecar is written next to it.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Debug, Args)]
pub struct SpotArgs {
    #[arg(long, value_name = "DIR")]
    pub features: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
    /// Detections CSV.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub dataset: DatasetArg,
    /// Feature caches; extracted in memory when omitted.
    #[arg(long, value_name = "DIR")]
    pub features: Option<PathBuf>,
    /// Report directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[command(flatten)]
    pub feature_flags: FeatureFlags,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub dataset: DatasetArg,
    #[arg(long, value_name = "DIR")]
    pub features: PathBuf,
    /// Overrides `MICROSPOT_DATA_DIR` and the config file.
    #[arg(long, value_name = "DIR")]
    pub data_dir: Option<PathBuf>,
    /// Overrides `MICROSPOT_PORT` and the config file.
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Initial model for a fresh data directory.
    #[arg(long, value_name = "PATH")]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReviewArgs {
    #[arg(long, default_value = "http://127.0.0.1:8080")]
    pub url: String,
    #[command(subcommand)]
    pub action: ReviewAction,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StatusArg {
    Pending,
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DecisionArg {
    Accept,
    Reject,
}

#[derive(Debug, Subcommand)]
pub enum ReviewAction {
    /// Videos with proposal counts.
    Videos,
    /// Proposals of one video, most confident first.
    Proposals {
        video: String,
        #[arg(long, value_enum)]
        status: Option<StatusArg>,
    },
    /// Save one frame as PNG.
    Frame {
        video: String,
        index: usize,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Accept or reject a proposal.
    Decide {
        proposal: String,
        #[arg(value_enum)]
        decision: DecisionArg,
        #[arg(long, default_value = "")]
        annotator: String,
    },
    /// Train a new model version from the feedback so far.
    Retrain,
    /// Active model version and history.
    Model,
}
