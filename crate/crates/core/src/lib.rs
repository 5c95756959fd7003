//! Patch-level point cloud mixing.
//!
//! The pipeline: split clouds into equal-size patches ([`patching`]), match
//! patches between two clouds by optimal assignment ([`assignment`]), weight
//! patches by teacher attention ([`scoring`]) and build mixed samples with
//! content-based soft targets ([`mixing`]).

pub mod assignment;
pub mod cloud;
pub mod error;
pub mod io;
pub mod mixing;
pub mod patching;
pub mod perturb;
pub mod rng;
pub mod scoring;

pub use assignment::{
    brute_force_assignment, patch_assignment, patch_assignment_centers, patch_assignment_full,
    point_assignment, solve, AssignMode, Assignment, CostMatrix, Metric,
};
pub use cloud::{normalize_cloud, LabelSpace, Mask, Point, PointCloud, TargetDist};
pub use error::{Error, Offset, Result};
pub use io::{load_cloud, save_cloud, CloudFormat};
pub use mixing::{
    batch_mix, mix_block, mix_patch, mix_point, sample_lambda, sample_mask, BatchConfig,
    MixLevel, MixParams, MixResult, Pairing, TargetMode,
};
pub use patching::{fps_centers, partition, FpsStart, PatchSet};
pub use scoring::{
    head_scores, read_score_cache, significance_scores, uniform_scores, write_score_cache,
    AttentionInputs, ScoreCache, ScoreVector,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
