use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Deserialize;

use crate::args::{AssignArg, AxisArg, FpsStartArg, LevelArg, PairingArg, TargetModeArg, TransformArg};

/// Defaults read from `--config`. Every key mirrors a flag name with
/// dashes replaced by underscores.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
    pub strict: Option<bool>,
    pub jobs: Option<usize>,
    pub patch_size: Option<usize>,
    pub patches: Option<usize>,
    pub fps_start: Option<FpsStartArg>,
    pub scores: Option<PathBuf>,
    pub attention: Option<PathBuf>,
    pub beta: Option<f64>,
    pub level: Option<LevelArg>,
    pub target_mode: Option<TargetModeArg>,
    pub assign: Option<AssignArg>,
    pub pairing: Option<PairingArg>,
    pub count: Option<usize>,
    pub lambda_sweep: Option<Vec<f64>>,
    pub pair: Option<Vec<String>>,
    pub classes: Option<u32>,
    pub raw_target: Option<bool>,
    pub transform: Option<TransformArg>,
    pub sigma: Option<f64>,
    pub axis: Option<AxisArg>,
    pub max_angle: Option<f64>,
    pub factor: Option<f64>,
    pub ratio: Option<f64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}
