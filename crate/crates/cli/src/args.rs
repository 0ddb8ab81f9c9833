use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fsg_core::synth::RoomType;

#[derive(Debug, Parser)]
#[command(
    name = "fsg",
    version,
    about = "Functional scene graphs with dual factor-graph inference"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Posterior edge confidences for a scene and its proposals.
    Infer(InferArgs),
    /// Procedurally generate a scene, ground truth and proposals.
    Generate(GenerateArgs),
    /// Apply annotation rules to a scene.
    Annotate(AnnotateArgs),
    /// Score predictions against ground truth.
    Eval(EvalArgs),
    /// Merge multi-view detections into a scene graph.
    Fuse(FuseArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct InferArgs {
    pub scene: PathBuf,
    pub proposals: PathBuf,
    /// Cardinality factor base.
    #[arg(long, default_value_t = fsg_core::factorgraph::DEFAULT_B)]
    pub b: f64,
    /// Confidence at or above which an edge is accepted.
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    #[arg(long, default_value_t = 16)]
    pub exact_max_vars: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "kitchen", value_parser = parse_room)]
    pub room: RoomType,
    /// Directory for scene.json, gt.json, proposals.json, rules.json and
    /// manual.json; a single bundle goes to stdout when omitted.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Positional noise on burners and lights, meters.
    #[arg(long)]
    pub jitter: Option<f64>,
    /// Switch spacing, meters.
    #[arg(long)]
    pub spread: Option<f64>,
    /// Knobs and burners per stove.
    #[arg(long)]
    pub burners: Option<usize>,
    /// Also write per-node surface samples (points.json).
    #[arg(long)]
    pub points: bool,
}

fn parse_room(s: &str) -> Result<RoomType, String> {
    s.parse().map_err(|e: fsg_core::Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct AnnotateArgs {
    pub scene: PathBuf,
    pub rules: PathBuf,
    #[arg(long)]
    pub manual: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScanArg {
    FirstAccepted,
    FirstOverlap,
    BestIou,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub gt: PathBuf,
    pub pred: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub k_node: usize,
    #[arg(long, default_value_t = 3)]
    pub k_rel: usize,
    #[arg(long, default_value_t = fsg_core::eval::DEFAULT_BINS)]
    pub bins: usize,
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    /// Each predicted node may match at most one ground-truth node.
    #[arg(long)]
    pub exclusive: bool,
    #[arg(long, value_enum, default_value = "first-accepted")]
    pub scan: ScanArg,
    #[arg(long, value_delimiter = ',', default_value = "switch,knob")]
    pub ambiguous_classes: Vec<String>,
    /// Fill missing confidences before scoring, as for unscored baselines.
    #[arg(long)]
    pub baseline: bool,
    #[arg(long, default_value_t = 1.0)]
    pub baseline_default: f64,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "outlet,switch,power,remote"
    )]
    pub baseline_exclude: Vec<String>,
    /// Write reliability-diagram bins as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    pub detections: PathBuf,
    #[arg(long, default_value_t = fsg_core::fusion::DEFAULT_IOU_THRESHOLD)]
    pub iou: f64,
    #[arg(long, default_value_t = fsg_core::fusion::DEFAULT_COSINE_THRESHOLD)]
    pub cos: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Listening port; FUNFACT_PORT takes precedence when set.
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: String,
    /// Directory for JSON session snapshots.
    #[arg(long)]
    pub state_dir: Option<PathBuf>,
}
