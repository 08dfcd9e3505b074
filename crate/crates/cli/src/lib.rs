//! Command-line pipeline: synth, extract, train, predict, split, eval and saliency.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

mod commands;
mod files;
mod provenance;

pub use files::{read_dims, read_scores, read_splits, ScoreRow};

/// Seed used when neither `--seed` nor `GEOFORENSICS_SEED` is given.
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Parser)]
#[command(name = "geoforensics", version, about = "Real-vs-generated image analysis from projective geometry cues")]
pub struct Cli {
    /// Global seed for every randomized stage.
    #[arg(long, global = true, env = "GEOFORENSICS_SEED", default_value_t = DEFAULT_SEED)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic corpus with a manifest.
    Synth(SynthArgs),
    /// Run the cue extractors over a manifest and write a feature cache.
    Extract(ExtractArgs),
    /// Train a classifier on extracted cues.
    Train(TrainArgs),
    /// Score manifest entries with a trained model.
    Predict(PredictArgs),
    /// Assign entries to easy / unconfident / misclassified splits.
    Split(SplitArgs),
    /// ROC curves, summary tables and cue agreement.
    Eval(EvalArgs),
    /// Per-segment or per-cell attributions of a trained model.
    Saliency(SaliencyArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output corpus directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub n_real: usize,
    #[arg(long, default_value_t = 5)]
    pub n_gen: usize,
    /// Per-line direction deflection of generated images, radians.
    #[arg(long, default_value_t = 0.15)]
    pub eps_vp: f64,
    /// Per-pair shadow azimuth jitter of generated images, radians.
    #[arg(long, default_value_t = 0.5235987755982988)]
    pub eps_shadow: f64,
    #[arg(long, default_value_t = 256)]
    pub width: usize,
    #[arg(long, default_value_t = 256)]
    pub height: usize,
    /// Do not synthesize prequalifier scores.
    #[arg(long)]
    pub no_scores: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Cue {
    All,
    Lines,
    Field,
    Shadow,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory for the feature cache and per-image cue files.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Cue::All)]
    pub cue: Cue,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub dump_segments: Option<PathBuf>,
    #[arg(long)]
    pub dump_vps: Option<PathBuf>,
    #[arg(long)]
    pub dump_field: Option<PathBuf>,
    #[arg(long)]
    pub dump_shadows: Option<PathBuf>,
    /// Gradient magnitude threshold on the [0,1] intensity scale.
    #[arg(long, default_value_t = 2.0 / 255.0)]
    pub lsd_rho: f64,
    /// Alignment tolerance, degrees.
    #[arg(long, default_value_t = 22.5)]
    pub lsd_angle_tol: f64,
    #[arg(long, default_value_t = 10.0)]
    pub lsd_min_length: f64,
    #[arg(long, default_value_t = 0.0)]
    pub lsd_log_nfa_max: f64,
    #[arg(long, default_value_t = 0.8)]
    pub lsd_scale: f64,
    #[arg(long, default_value_t = 0.6)]
    pub lsd_sigma_scale: f64,
    #[arg(long, default_value_t = 0.7)]
    pub lsd_density: f64,
    #[arg(long, default_value_t = 2000)]
    pub vp_iters: usize,
    /// Inlier angular tolerance, degrees.
    #[arg(long, default_value_t = 2.0)]
    pub vp_inlier_tol: f64,
    #[arg(long, default_value_t = 5)]
    pub vp_min_support: usize,
    #[arg(long, default_value_t = 3)]
    pub vp_max: usize,
    #[arg(long, default_value_t = 8)]
    pub grid_w: usize,
    #[arg(long, default_value_t = 8)]
    pub grid_h: usize,
    /// Half width of each shadow tolerance wedge, degrees.
    #[arg(long, default_value_t = 10.0)]
    pub shadow_half_width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Learner {
    Lr,
    Set,
    Grid,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory written by `extract`.
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long, value_enum)]
    pub learner: Learner,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Logistic columns: `baseline`, `shadow`, `all` or a comma list of names.
    #[arg(long, default_value = "baseline")]
    pub columns: String,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    /// Learning rate [default: 0.01 for lr, 0.001 for set and grid].
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, default_value_t = 1e-4)]
    pub l2: f64,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    /// Hidden widths [default: 64,64,32 for set (phi, phi, head), 32 for grid].
    #[arg(long)]
    pub hidden: Option<String>,
    /// Set learner: keep at most this many longest segments per image.
    #[arg(long, default_value_t = 512)]
    pub max_elements: usize,
    /// Set learner: train on a random nonempty subset of each set every epoch.
    #[arg(long)]
    pub subset_sampling: bool,
    /// Fraction of the manifest held out from training (selected by the seed).
    #[arg(long, default_value_t = 0.0)]
    pub holdout: f64,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Scores CSV to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Score only the held-out fraction (same selection as `train --holdout`).
    #[arg(long, default_value_t = 0.0)]
    pub holdout: f64,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Splits CSV to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Half width of the unconfident band around 0.5.
    #[arg(long, default_value_t = 0.1)]
    pub band: f64,
    /// Count misclassified entries inside the unconfident split.
    #[arg(long)]
    pub nested_misclassified: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Cue scores as NAME=PATH; repeatable. Names ls, pf and os enable the agreement table.
    #[arg(long = "scores", required = true)]
    pub scores: Vec<String>,
    /// Report directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub band: f64,
    #[arg(long)]
    pub nested_misclassified: bool,
    /// Scores below this count as "detected as generated".
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Also write one SVG ROC plot per split.
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Args)]
pub struct SaliencyArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Manifest id of the image to explain.
    #[arg(long)]
    pub id: String,
    /// Attribution file to write.
    #[arg(long)]
    pub out: PathBuf,
}

/// Error split by exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Data(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub(crate) fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

pub fn command() -> clap::Command {
    Cli::command()
}

/// Runs the CLI. Exit codes: 0 success or help, 1 usage error, 2 data error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match commands::dispatch(&cli, &argv) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}\n");
            eprintln!("{}", command().render_usage());
            1
        }
        Err(CliError::Data(e)) => {
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            2
        }
    }
}
