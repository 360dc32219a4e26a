use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use evoembed::Layout;

#[derive(Debug, Parser)]
#[command(name = "evoembed", version, about = "Evolutionary embeddings of iterative generation processes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize a layout for a feature manifest and write a bundle.
    Embed(EmbedArgs),
    /// Trustworthiness and continuity of a bundle, optionally against baselines.
    Metrics(MetricsArgs),
    /// Recompute pathways and clusters of an existing bundle.
    Pathways(PathwayArgs),
    /// Generate a synthetic branching dataset with ground-truth labels.
    Synth(SynthArgs),
    /// Serve a bundle directory over HTTP for the viewer.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LayoutArg {
    Radial,
    Rectilinear,
}

impl From<LayoutArg> for Layout {
    fn from(l: LayoutArg) -> Self {
        match l {
            LayoutArg::Radial => Layout::Radial,
            LayoutArg::Rectilinear => Layout::Rectilinear,
        }
    }
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    /// Feature manifest (JSON).
    #[arg(long)]
    pub input: PathBuf,
    /// Output bundle path; the loss history goes next to it as `<stem>.loss.csv`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "radial")]
    pub layout: LayoutArg,
    /// Semantic weight.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Displacement weight.
    #[arg(long, default_value_t = 5.0)]
    pub beta: f64,
    /// Alignment weight [default: 0.2 rectilinear, 0.05 radial]
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, default_value_t = 30.0)]
    pub perplexity: f64,
    /// Optimization iterations.
    #[arg(long, default_value_t = 2000)]
    pub iters: usize,
    /// Distance between neighbouring bands or rings.
    #[arg(long, default_value_t = 20.0)]
    pub spacing: f64,
    #[arg(long, default_value_t = 20.0)]
    pub sigma_start: f64,
    #[arg(long, default_value_t = 10.0)]
    pub sigma_end: f64,
    /// PCA target dimension; 0 disables PCA.
    #[arg(long, default_value_t = 50)]
    pub pca_dims: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Gradient-descent step size. Values above the instance count tend to
    /// fling points out of their bands.
    #[arg(long, default_value_t = 200.0)]
    pub learning_rate: f64,
    /// Plain momentum steps without per-coordinate adaptive gains.
    #[arg(long)]
    pub no_gains: bool,
    /// Skip pathway extraction and clustering.
    #[arg(long)]
    pub no_pathways: bool,
    #[command(flatten)]
    pub pathway: PathwayFlags,
}

#[derive(Debug, Clone, Args)]
pub struct PathwayFlags {
    /// DBSCAN radius [default: spacing / 4]
    #[arg(long)]
    pub eps: Option<f64>,
    /// DBSCAN core-point threshold (self included).
    #[arg(long, default_value_t = 4)]
    pub min_pts: usize,
    /// Interpolation factor towards cluster centroids, in [0, 1].
    #[arg(long, default_value_t = 0.0)]
    pub interp: f64,
    /// Cardinal spline tension (0 is Catmull-Rom).
    #[arg(long, default_value_t = 0.5)]
    pub tension: f64,
    /// Visible path-length percentile range.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], default_values_t = [0.0, 100.0])]
    pub len_pct: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    None,
    Vanilla,
    Noalign,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Bundle to evaluate; its `quality` fields are updated in place.
    #[arg(long)]
    pub bundle: PathBuf,
    /// The manifest the bundle was computed from.
    #[arg(long)]
    pub input: PathBuf,
    /// Neighbourhood size.
    #[arg(long, default_value_t = 7)]
    pub k: usize,
    /// Extra reference run, using the bundle's recorded configuration.
    #[arg(long, value_enum, default_value = "none")]
    pub baseline: Baseline,
    /// Measure against the raw features instead of the PCA-reduced ones.
    #[arg(long)]
    pub pre_pca: bool,
    /// CSV output [default: <bundle stem>.metrics.csv]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PathwayArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// Output bundle [default: overwrite --bundle]
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub pathway: PathwayFlags,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    pub instances: usize,
    /// Sampled iterations.
    #[arg(long, default_value_t = 6)]
    pub iterations: usize,
    #[arg(long, default_value_t = 16)]
    pub dims: usize,
    /// Final number of modes.
    #[arg(long, default_value_t = 4)]
    pub modes: usize,
    /// Branch tree `rank:parent>child,child;...` [default: balanced binary splits]
    #[arg(long)]
    pub schedule: Option<String>,
    /// Per-element noise standard deviation.
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    /// Distance between a child mode centre and its parent's.
    #[arg(long, default_value_t = 12.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Receives `synth.json`, `synth.f32` and `labels.csv`.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Directory holding `bundle.json` and optional thumbnails.
    #[arg(long)]
    pub bundle_dir: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
}
