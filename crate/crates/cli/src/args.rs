use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "softsplat",
    version,
    about = "Hard vs. soft point-cloud projection experiments"
)]
pub struct Cli {
    /// Run every kernel on the calling thread (results are identical either way).
    #[arg(long, global = true)]
    pub sequential: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic point cloud.
    GenSynth(GenSynthArgs),
    /// Hard z-buffer projection to a depth or CCM grid.
    Project(ProjectArgs),
    /// Gaussian soft splatting to a feature grid.
    Splat(SplatArgs),
    /// Compare hard and soft projection: entropy, coverage, CMIT, panels.
    Analyze(AnalyzeArgs),
    /// Check every backward pass against finite differences.
    Gradcheck(GradcheckArgs),
    /// Measure gradient flow from a grid loss back to point coordinates.
    Probe(ProbeArgs),
    /// Zero the visual branch and measure how much the fused features move.
    Ablate(AblateArgs),
    /// Distances between point clouds.
    Loss(LossArgs),
    /// Canonicalize a LiDAR object crop using its 3D bounding box.
    NormalizeKitti(NormalizeKittiArgs),
}

/// Run-configuration overrides. Precedence: these flags, then `--config`,
/// then built-in defaults.
#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Gaussian bandwidth in pixels.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Kernel window half-width in pixels.
    #[arg(long)]
    pub radius: Option<usize>,
    /// Disable the inverse-depth weighting of splats.
    #[arg(long)]
    pub no_depth_weighting: bool,
    /// Image height; with --width/--distance, replaces the camera by one
    /// looking at the origin.
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    /// Camera distance from the origin along the optical axis.
    #[arg(long)]
    pub distance: Option<f64>,
    /// Histogram bins for entropy.
    #[arg(long)]
    pub bins: Option<usize>,
    /// Coverage threshold on accumulated weight.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub seed_data: Option<u64>,
    #[arg(long)]
    pub seed_params: Option<u64>,
    #[arg(long)]
    pub seed_probe: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    Sphere,
    Lidar,
}

/// Where a command gets its cloud: a file, or a synthetic generator.
#[derive(Debug, Clone, Args, Serialize)]
pub struct SourceArgs {
    /// Input cloud (.xyz or .ply); overrides `input` in the config.
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    /// Synthetic cloud used when no input file is given.
    #[arg(long, value_enum)]
    pub synth: Option<SynthKind>,
    /// Points in the synthetic cloud.
    #[arg(long)]
    pub points: Option<usize>,
    /// Scan lines of the synthetic LiDAR cloud.
    #[arg(long, default_value_t = 8)]
    pub rays: usize,
    /// Use coordinates as given instead of centering and scaling to the unit ball.
    #[arg(long)]
    pub raw_coords: bool,
    /// Skip malformed lines instead of rejecting the file.
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct GenSynthArgs {
    #[arg(value_enum)]
    pub kind: SynthKind,
    #[arg(long, short = 'n', default_value_t = 2048)]
    pub points: usize,
    #[arg(long, default_value_t = 8)]
    pub rays: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Output cloud; `.ply` writes ASCII PLY, anything else xyz.
    #[arg(long, short)]
    #[serde(skip)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum HardModeArg {
    Depth,
    Ccm,
}

#[derive(Debug, Args, Serialize)]
pub struct ProjectArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, value_enum, default_value_t = HardModeArg::Ccm)]
    pub mode: HardModeArg,
    /// Output grid; `.pgm` writes 16-bit PGM, anything else raw.
    #[arg(long, short)]
    #[serde(skip)]
    pub output: PathBuf,
    /// Value range mapped onto the PGM sample range (default: [0, 1] for
    /// CCM, [0, max depth] for depth).
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
    pub range: Option<Vec<f64>>,
}

#[derive(Debug, Args, Serialize)]
pub struct SplatArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Output grid; `.pgm` writes 16-bit PGM, anything else raw.
    #[arg(long, short)]
    #[serde(skip)]
    pub output: PathBuf,
    /// Also write the accumulated weight grid (raw).
    #[arg(long)]
    #[serde(skip)]
    pub weights: Option<PathBuf>,
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
    pub range: Option<Vec<f64>>,
}

#[derive(Debug, Args, Serialize)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Directory receiving report.json, hard.raw, soft.raw and panel PGMs.
    #[arg(long)]
    #[serde(skip)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct GradcheckArgs {
    /// Accepted instances per suite.
    #[arg(long, default_value_t = 100)]
    pub instances: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Report path; printed to stdout when absent.
    #[arg(long, short)]
    #[serde(skip)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeMode {
    Hard,
    Soft,
    Both,
}

#[derive(Debug, Args, Serialize)]
pub struct ProbeArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, value_enum, default_value_t = ProbeMode::Both)]
    pub mode: ProbeMode,
    #[arg(long, short)]
    #[serde(skip)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct AblateArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Geometry feature channels.
    #[arg(long, default_value_t = 16)]
    pub channels: usize,
    /// Attention key width.
    #[arg(long, default_value_t = 8)]
    pub key_width: usize,
    /// Neighbors per point in the EdgeConv graph.
    #[arg(short = 'k', long, default_value_t = 16)]
    pub k: usize,
    /// Zero the value projection, which must make the output blind to the image.
    #[arg(long)]
    pub zero_value_projection: bool,
    #[arg(long, short)]
    #[serde(skip)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Chamfer,
    ChamferL1,
    Arc,
    Fscore,
    Fidelity,
    Mmd,
}

#[derive(Debug, Args, Serialize)]
pub struct LossArgs {
    #[arg(value_enum)]
    pub metric: Metric,
    /// First cloud (prediction; the partial input for fidelity).
    pub x: PathBuf,
    /// Second cloud (ground truth; the completed output for fidelity). For
    /// mmd, every remaining path is a reference shape.
    #[arg(required = true)]
    pub y: Vec<PathBuf>,
    /// Weight of the arc-CD term.
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// Distance threshold for the F-score.
    #[arg(long, default_value_t = 0.01)]
    pub threshold: f64,
    #[arg(long, short)]
    #[serde(skip)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct NormalizeKittiArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, short)]
    #[serde(skip)]
    pub output: PathBuf,
    /// Box center x y z.
    #[arg(long, num_args = 3, value_names = ["X", "Y", "Z"], allow_negative_numbers = true, required = true)]
    pub center: Vec<f64>,
    /// Box length, width, height.
    #[arg(long, num_args = 3, value_names = ["L", "W", "H"], required = true)]
    pub dims: Vec<f64>,
    /// Heading about +z, radians.
    #[arg(long, allow_negative_numbers = true, default_value_t = 0.0)]
    pub yaw: f64,
}
