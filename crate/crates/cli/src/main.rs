mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use csp_core::csp::RedrawPolicy;
use csp_core::data::{SynthMode, SynthTask};
use csp_core::{Error, ErrorClass};

use config::StrategyKind;

/// Channel shuffling pre-training experiments at desk scale.
#[derive(Parser, Debug)]
#[command(name = "csp", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Pre-train a classifier with the baseline order or channel shuffling.
    Pretrain(PretrainArgs),
    /// Fine-tune a segmenter, optionally from a pre-trained encoder.
    Finetune(FinetuneArgs),
    /// Evaluate a checkpoint on a manifest split.
    Eval(EvalArgs),
    /// Classification accuracy under channel permutations.
    Sensitivity(SensitivityArgs),
    /// Draw one CSP plan and write the resulting channels as PNGs.
    CspPreview(PreviewArgs),
    /// Generate a synthetic dataset with a manifest.
    Synth(SynthArgs),
    /// Render tables from saved reports and training logs.
    Report(ReportArgs),
}

/// Flags shared by both training phases. Each one overrides the config file.
#[derive(Args, Debug, Default)]
pub struct TrainFlags {
    /// JSON run configuration; missing keys keep their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Output checkpoint.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON-lines training log.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Directory for intermediate checkpoints.
    #[arg(long)]
    pub checkpoint_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub patch: Option<usize>,
    /// Comma-separated resize scales.
    #[arg(long, value_delimiter = ',')]
    pub scales: Option<Vec<f64>>,
    #[arg(long)]
    pub flip_prob: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Warmup length in the phase's unit (epochs or iterations).
    #[arg(long)]
    pub warmup: Option<u64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
    #[arg(long)]
    pub log_every: Option<u64>,
}

#[derive(Args, Debug)]
pub struct PretrainArgs {
    #[command(flatten)]
    pub common: TrainFlags,
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyKind>,
    /// CSP output channel count.
    #[arg(long)]
    pub csp_n: Option<usize>,
    #[arg(long)]
    pub csp_seed: Option<u64>,
    #[arg(long, value_enum)]
    pub redraw: Option<RedrawArg>,
    #[arg(long)]
    pub input_channels: Option<usize>,
    #[arg(long)]
    pub epochs: Option<u64>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum RedrawArg {
    PerSample,
    FixedPerImage,
}

impl From<RedrawArg> for RedrawPolicy {
    fn from(r: RedrawArg) -> Self {
        match r {
            RedrawArg::PerSample => RedrawPolicy::PerSample,
            RedrawArg::FixedPerImage => RedrawPolicy::FixedPerImage,
        }
    }
}

#[derive(Args, Debug)]
pub struct FinetuneArgs {
    #[command(flatten)]
    pub common: TrainFlags,
    /// Pre-trained checkpoint whose encoder initializes the segmenter.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Comma-separated band names, in model input order.
    #[arg(long, value_delimiter = ',')]
    pub bands: Option<Vec<String>>,
    #[arg(long)]
    pub iterations: Option<u64>,
    #[arg(long)]
    pub eval_every: Option<u64>,
    /// Final validation metrics as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "val")]
    pub split: String,
    #[arg(long, value_delimiter = ',')]
    pub bands: Option<Vec<String>>,
    /// Tile size for sliding-window inference.
    #[arg(long, default_value_t = 512)]
    pub patch: usize,
    /// Tile stride; defaults to the tile size.
    #[arg(long)]
    pub stride: Option<usize>,
    /// Metrics report as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SensitivityArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "val")]
    pub split: String,
    /// Channel permutation such as `2,1,0`; repeatable. Defaults to identity
    /// and reversal.
    #[arg(long = "perm")]
    pub perms: Vec<String>,
    /// Also print per-class accuracy.
    #[arg(long)]
    pub per_class: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PreviewArgs {
    /// Source channel count; taken from `--image` when given.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub epoch: u64,
    #[arg(long, default_value_t = 0)]
    pub sample: u64,
    #[arg(long, value_enum, default_value = "per-sample")]
    pub redraw: RedrawArg,
    /// Raster to transform; a synthetic texture is used otherwise.
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long, default_value = "csp-preview")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// JSON synthetic-data spec; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub channels: Option<usize>,
    /// Square image size.
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub train: Option<usize>,
    #[arg(long)]
    pub val: Option<usize>,
    #[arg(long)]
    pub test: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum ModeArg {
    SpatialCue,
    SpectralCue,
    Mixed,
}

impl From<ModeArg> for SynthMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::SpatialCue => SynthMode::SpatialCue,
            ModeArg::SpectralCue => SynthMode::SpectralCue,
            ModeArg::Mixed => SynthMode::Mixed,
        }
    }
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum TaskArg {
    Classification,
    Segmentation,
}

impl From<TaskArg> for SynthTask {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Classification => SynthTask::Classification,
            TaskArg::Segmentation => SynthTask::Segmentation,
        }
    }
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Sensitivity or metrics reports (`.json`) and training logs (`.jsonl`).
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Also write the rendered tables here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn exit_code(err: &Error) -> u8 {
    match err.class() {
        ErrorClass::Config => 2,
        ErrorClass::Data => 3,
        ErrorClass::Numeric => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Pretrain(a) => commands::pretrain(a),
        Command::Finetune(a) => commands::finetune(a),
        Command::Eval(a) => commands::eval(a),
        Command::Sensitivity(a) => commands::sensitivity(a),
        Command::CspPreview(a) => commands::csp_preview(a),
        Command::Synth(a) => commands::synth(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            let code = exit_code(&err);
            let field = err.field().unwrap_or("-");
            let msg = err.to_string().replace('\n', " ");
            eprintln!("error: code={code} field={field} {msg}");
            ExitCode::from(code)
        }
    }
}
