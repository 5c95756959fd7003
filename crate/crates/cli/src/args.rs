use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "patchmix", version, about = "Patch-level point cloud mixing toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Split every input cloud into equal-size patches and write membership files.
    Partition(PartitionArgs),
    /// Compute patch significance scores from attention exports into a score cache.
    Score(ScoreArgs),
    /// Generate mixed samples and a manifest.
    Mix(MixArgs),
    /// Apply a robustness perturbation to every input cloud.
    Perturb(PerturbArgs),
    /// Summarize a mix manifest.
    Stats(StatsArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Input directory, `.list` file of paths, or a single file.
    #[arg(long)]
    pub input: Option<PathBuf>,

    /// Output directory (or file, for `score` and `stats`).
    #[arg(long)]
    pub output: Option<PathBuf>,

    #[arg(long)]
    pub seed: Option<u64>,

    /// TOML file with defaults for any of the flags; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Treat per-file warnings as failures (exit code 1).
    #[arg(long)]
    pub strict: bool,

    /// Worker threads; 1 runs serially, 0 uses all cores.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct PatchArgs {
    /// Points per patch (default 32).
    #[arg(long)]
    pub patch_size: Option<usize>,

    /// Patches per cloud (default N / patch-size).
    #[arg(long)]
    pub patches: Option<usize>,

    /// First farthest-point-sampling center.
    #[arg(long, value_enum)]
    pub fps_start: Option<FpsStartArg>,
}

#[derive(Args, Debug)]
pub struct PartitionArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub patch: PatchArgs,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub common: Common,

    /// Directory of `<id>.ppma` attention exports (alias of --input).
    #[arg(long)]
    pub attention: Option<PathBuf>,

    /// Patch count recorded in the header of an empty cache.
    #[arg(long)]
    pub patches: Option<usize>,
}

#[derive(Args, Debug)]
pub struct MixArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub patch: PatchArgs,

    /// Score cache produced by `score`.
    #[arg(long)]
    pub scores: Option<PathBuf>,

    #[arg(long)]
    pub beta: Option<f64>,

    #[arg(long, value_enum)]
    pub level: Option<LevelArg>,

    #[arg(long, value_enum)]
    pub target_mode: Option<TargetModeArg>,

    #[arg(long, value_enum)]
    pub assign: Option<AssignArg>,

    #[arg(long, value_enum)]
    pub pairing: Option<PairingArg>,

    /// Number of mixed samples to generate.
    #[arg(long)]
    pub count: Option<usize>,

    /// Comma-separated fixed ratios; one mix per value on a single pair.
    #[arg(long, value_delimiter = ',')]
    pub lambda_sweep: Option<Vec<f64>>,

    /// Sample ids for the sweep pair, `first,second`.
    #[arg(long, value_delimiter = ',')]
    pub pair: Option<Vec<String>>,

    /// Class count (defaults to the count stored in the inputs).
    #[arg(long)]
    pub classes: Option<u32>,

    /// Write the unnormalized w1*y1 + w2*y2 target to the manifest.
    #[arg(long)]
    pub raw_target: bool,
}

#[derive(Args, Debug)]
pub struct PerturbArgs {
    #[command(flatten)]
    pub common: Common,

    #[arg(long, value_enum)]
    pub transform: Option<TransformArg>,

    /// Jitter standard deviation [default: 0.01].
    #[arg(long)]
    pub sigma: Option<f64>,

    /// Rotation axis [default: z].
    #[arg(long, value_enum)]
    pub axis: Option<AxisArg>,

    /// Rotation angles are uniform in [-max-angle, max-angle] degrees [default: 30].
    #[arg(long)]
    pub max_angle: Option<f64>,

    /// Uniform scale factor [default: 2.0].
    #[arg(long)]
    pub factor: Option<f64>,

    /// Fraction of points removed by `drop` [default: 0.2]. ceil((1 - ratio) * N)
    /// points are kept, so 1024 points at 0.2 leave 820.
    #[arg(long)]
    pub ratio: Option<f64>,

    /// Patch size used to warn about outputs that no longer split evenly [default: 32].
    #[arg(long)]
    pub patch_size: Option<usize>,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[command(flatten)]
    pub common: Common,

    /// Units the mask covers (patch count, or point count for block/point
    /// mixes); enables point-share and divergence columns.
    #[arg(long)]
    pub patches: Option<usize>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FpsStartArg {
    Centroid,
    Random,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LevelArg {
    Patch,
    Block,
    Point,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetModeArg {
    Score,
    Linear,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssignArg {
    Centers,
    Full,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairingArg {
    Shuffle,
    AllPairs,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformArg {
    Jitter,
    Rotate,
    Scale,
    Drop,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AxisArg {
    X,
    Y,
    Z,
}
