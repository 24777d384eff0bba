use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser, Serialize)]
#[command(name = "gazehead", version, about = "Speech-driven gaze and head motion with style control")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Serialize)]
pub struct Common {
    /// JSON file whose keys mirror the command-line flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads for per-sequence work.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Parent of the per-invocation run directories.
    #[arg(long, default_value = "runs")]
    pub runs_dir: PathBuf,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Command {
    /// Write a synthetic corpus: motion files, WAVs, manifest, speaker profiles.
    Synth(SynthArgs),
    /// Compute log-mel features for every manifest entry.
    ExtractFeatures(ExtractArgs),
    /// Contrastive pretraining of the style encoder.
    PretrainStyle(StyleArgs),
    /// Train the generator against a frozen style encoder.
    Train(TrainArgs),
    /// Roll the generator over the held-out segment of every session.
    Generate(GenerateArgs),
    /// Roll the generator with the style of a reference sequence.
    TransferStyle(TransferArgs),
    /// Score generated sequences against ground truth.
    Evaluate(EvaluateArgs),
    /// Export window style embeddings and cluster quality.
    Embed(EmbedArgs),
    /// Finite-difference gradient checks of every differentiable module.
    Gradcheck(GradcheckArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::ExtractFeatures(_) => "extract-features",
            Command::PretrainStyle(_) => "pretrain-style",
            Command::Train(_) => "train",
            Command::Generate(_) => "generate",
            Command::TransferStyle(_) => "transfer-style",
            Command::Evaluate(_) => "evaluate",
            Command::Embed(_) => "embed",
            Command::Gradcheck(_) => "gradcheck",
        }
    }

    pub fn common(&self) -> &Common {
        match self {
            Command::Synth(a) => &a.common,
            Command::ExtractFeatures(a) => &a.common,
            Command::PretrainStyle(a) => &a.common,
            Command::Train(a) => &a.common,
            Command::Generate(a) => &a.common,
            Command::TransferStyle(a) => &a.common,
            Command::Evaluate(a) => &a.common,
            Command::Embed(a) => &a.common,
            Command::Gradcheck(a) => &a.common,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 4)]
    pub speakers: usize,
    #[arg(long, default_value_t = 2)]
    pub sessions: usize,
    #[arg(long, default_value_t = 60.0)]
    pub seconds: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output directory (default: `<run dir>/corpus`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args, Serialize)]
pub struct ExtractArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Manifest to write with `features_path` filled in (default: in place).
    #[arg(long)]
    pub out_manifest: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args, Serialize, Clone, Copy)]
pub struct SplitArgs {
    /// Leading fraction of each session used for training.
    #[arg(long, default_value_t = 0.75)]
    pub train_frac: f64,
    /// Frames with any |angle| above this are dropped from training.
    #[arg(long, default_value_t = 40.0)]
    pub angle_bound: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct StyleArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Checkpoint path (default: `<run dir>/style.ckpt`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    pub style_dim: usize,
    #[arg(long, default_value_t = 25)]
    pub window: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    #[arg(long, default_value_t = 128)]
    pub ff_dim: usize,
    #[arg(long, default_value_t = 8)]
    pub epochs: usize,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 50)]
    pub steps_per_epoch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, value_enum, default_value_t = ScheduleArg::Constant)]
    pub lr_schedule: ScheduleArg,
    #[arg(long, default_value_t = 0.1)]
    pub tau: f64,
    #[arg(long, default_value_t = 250)]
    pub gap_min: usize,
    #[arg(long, default_value_t = 5.0)]
    pub clip_norm: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[command(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Pretrained style encoder; required unless `--style-dim 0`.
    #[arg(long)]
    pub style_ckpt: Option<PathBuf>,
    /// Checkpoint path (default: `<run dir>/generator.ckpt`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Style width: 0 trains the unconditioned baseline.
    #[arg(long, default_value_t = 64)]
    pub style_dim: usize,
    /// Weight of the position loss; 1.0 disables the velocity term.
    #[arg(long, default_value_t = 0.8)]
    pub lambda: f64,
    #[arg(long, default_value_t = 25)]
    pub past: usize,
    #[arg(long, default_value_t = 10)]
    pub future: usize,
    #[arg(long, default_value_t = 64)]
    pub model_dim: usize,
    #[arg(long, default_value_t = 3)]
    pub lstm_layers: usize,
    #[arg(long, default_value_t = 128)]
    pub lstm_hidden: usize,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 3e-4)]
    pub lr: f64,
    #[arg(long, value_enum, default_value_t = ScheduleArg::Cosine)]
    pub lr_schedule: ScheduleArg,
    #[arg(long, default_value_t = 5.0)]
    pub clip_norm: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[command(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleArg {
    Constant,
    Cosine,
}

impl From<ScheduleArg> for gazehead_core::trainer::LrSchedule {
    fn from(a: ScheduleArg) -> Self {
        match a {
            ScheduleArg::Constant => Self::Constant,
            ScheduleArg::Cosine => Self::Cosine,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeedArg {
    /// First M ground-truth frames of each held-out segment.
    Gt,
    /// Training mean pose.
    MeanPose,
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Output directory (default: `<run dir>/generated`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SeedArg::Gt)]
    pub seed_window: SeedArg,
    #[command(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args, Serialize)]
pub struct TransferArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Session id from the manifest, or a motion file path.
    #[arg(long)]
    pub reference: String,
    /// Output directory (default: `<run dir>/transfer`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SeedArg::Gt)]
    pub seed_window: SeedArg,
    #[command(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    /// Directory of generated motion files.
    #[arg(long)]
    pub pred_dir: PathBuf,
    /// Ground-truth manifest.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Style checkpoint for the cosine style error.
    #[arg(long)]
    pub style_ckpt: Option<PathBuf>,
    /// Output directory (default: the run directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 3.5)]
    pub disp_max: f64,
    #[arg(long, default_value_t = 3)]
    pub min_dur: usize,
    #[arg(long, default_value_t = 3.0)]
    pub bas_sigma: f64,
    /// Divide the head-speed branch of the compensation score by 90 °/s.
    #[arg(long)]
    pub normalize_comp: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpanArg {
    All,
    Test,
}

#[derive(Debug, Args, Serialize)]
pub struct EmbedArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub style_ckpt: PathBuf,
    /// Generated motion to embed alongside the ground truth.
    #[arg(long)]
    pub pred_dir: Option<PathBuf>,
    /// Which ground-truth frames to embed.
    #[arg(long, value_enum, default_value_t = SpanArg::All)]
    pub span: SpanArg,
    /// Output directory (default: the run directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args, Serialize)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Check one module only.
    #[arg(long)]
    pub module: Option<String>,
    #[command(flatten)]
    pub common: Common,
}
