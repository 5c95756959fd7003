//! Mixed-sample generation.
//!
//! Patch-level mixing keeps the patches of the first cloud selected by a
//! random mask and fills every other slot with the second cloud's patch that
//! the optimal assignment pairs with it. The soft target weights each source
//! label by the summed significance of the patches it contributed. The
//! block-level (seed point plus nearest neighbors) and point-level (uniform
//! random points) variants use count-proportional targets.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;

use crate::assignment::{point_assignment, patch_assignment, AssignMode, Assignment};
use crate::cloud::{LabelSpace, Mask, Point, PointCloud, TargetDist};
use crate::error::{Error, Result};
use crate::patching::{dist2, partition, FpsStart, PatchSet};
use crate::rng::{self, MixRng};
use crate::scoring::{uniform_scores, ScoreCache, ScoreVector};

/// Default Beta shape.
pub const DEFAULT_BETA: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TargetMode {
    /// Weight labels by the significance of contributed patches.
    #[default]
    Score,
    /// Weight labels by the fraction of selected units.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MixLevel {
    #[default]
    Patch,
    Block,
    Point,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixParams {
    pub beta: f64,
    pub target_mode: TargetMode,
    pub level: MixLevel,
    pub seed: u64,
}

impl Default for MixParams {
    fn default() -> Self {
        Self {
            beta: DEFAULT_BETA,
            target_mode: TargetMode::Score,
            level: MixLevel::Patch,
            seed: 0,
        }
    }
}

impl MixParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::param(format!("beta must be positive, got {}", self.beta)));
        }
        Ok(())
    }
}

/// Where a mixed sample came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub source_a: Option<String>,
    pub source_b: Option<String>,
    pub assignment: Assignment,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixResult {
    pub mixed: PointCloud,
    /// Over patches (patch level) or points (block and point level).
    pub mask: Mask,
    /// The drawn (or fixed) mixing ratio.
    pub lam: f64,
    /// Weight of the first source: its selected score mass, or the selected
    /// fraction for block and point mixing.
    pub w1: f64,
    /// Weight of the second source, counterpart of `w1`.
    pub w2: f64,
    pub target: TargetDist,
    /// `w1 * y1 + w2 * y2` before renormalization.
    pub raw_target: Vec<f64>,
    pub provenance: Provenance,
}

impl MixResult {
    /// Fraction of mask units taken from the first source.
    pub fn selected_fraction(&self) -> f64 {
        self.mask.count_ones() as f64 / self.mask.len() as f64
    }
}

/// Draws one mixing ratio from `Beta(beta, beta)`.
pub fn sample_lambda<R: Rng + ?Sized>(beta: f64, rng: &mut R) -> Result<f64> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::param(format!("beta must be positive, got {beta}")));
    }
    let dist = Beta::new(beta, beta).map_err(|e| Error::param(e.to_string()))?;
    Ok(dist.sample(rng).clamp(0.0, 1.0))
}

/// `floor(lam * n)`, capped at `n`.
pub fn selected_count(lam: f64, n: usize) -> usize {
    ((lam * n as f64).floor().max(0.0) as usize).min(n)
}

fn check_lambda(lam: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lam) {
        return Err(Error::param(format!("lambda must lie in [0, 1], got {lam}")));
    }
    Ok(())
}

/// Mask with exactly `floor(lam * len)` ones placed uniformly at random.
pub fn sample_mask<R: Rng + ?Sized>(len: usize, lam: f64, rng: &mut R) -> Result<Mask> {
    check_lambda(lam)?;
    let k = selected_count(lam, len);
    Ok(Mask::from_indices(len, index::sample(rng, len, k)))
}

/// One side of a patch-level mix.
#[derive(Debug, Clone, Copy)]
pub struct PatchSource<'a> {
    pub patches: &'a PatchSet,
    pub target: &'a TargetDist,
    pub scores: &'a ScoreVector,
}

/// One side of a block- or point-level mix.
#[derive(Debug, Clone, Copy)]
pub struct PointSource<'a> {
    pub cloud: &'a PointCloud,
    pub target: &'a TargetDist,
}

fn check_targets(a: &TargetDist, b: &TargetDist) -> Result<()> {
    if a.num_classes() != b.num_classes() {
        return Err(Error::param(format!(
            "targets differ in class count: {} vs {}",
            a.num_classes(),
            b.num_classes()
        )));
    }
    Ok(())
}

fn raw_blend(y1: &TargetDist, w1: f64, y2: &TargetDist, w2: f64) -> Vec<f64> {
    y1.weights()
        .iter()
        .zip(y2.weights())
        .map(|(a, b)| w1 * a + w2 * b)
        .collect()
}

/// Patch mix with a caller-chosen mask over the first source's patches.
pub fn patch_mix_with_mask(
    a: PatchSource<'_>,
    b: PatchSource<'_>,
    assignment: &Assignment,
    mask: Mask,
    lam: f64,
    mode: TargetMode,
) -> Result<MixResult> {
    let p = a.patches.num_patches();
    if b.patches.num_patches() != p || b.patches.patch_size() != a.patches.patch_size() {
        return Err(Error::param("patch sets differ in shape"));
    }
    if a.scores.len() != p || b.scores.len() != p {
        return Err(Error::param(format!(
            "score vectors of length {} and {} for {p} patches",
            a.scores.len(),
            b.scores.len()
        )));
    }
    if assignment.len() != p || mask.len() != p {
        return Err(Error::param("assignment and mask must cover every patch"));
    }
    check_targets(a.target, b.target)?;

    let perm = assignment.perm();
    let mut points: Vec<Point> = a.patches.cloud().points().to_vec();
    let b_points = b.patches.cloud().points();
    let mut w1 = 0.0;
    let mut w2 = 0.0;
    for slot in 0..p {
        if mask.get(slot) {
            w1 += a.scores.get(slot);
        } else {
            let q = perm[slot];
            w2 += b.scores.get(q);
            for (&dst, &src) in a.patches.members(slot).iter().zip(b.patches.members(q)) {
                points[dst] = b_points[src];
            }
        }
    }

    let (target, raw_target) = match mode {
        TargetMode::Score => {
            if !(w1 + w2 > 0.0) {
                return Err(Error::Mixing(
                    "selected patches carry zero score on both sides".into(),
                ));
            }
            (
                a.target.blend(w1, b.target, w2)?,
                raw_blend(a.target, w1, b.target, w2),
            )
        }
        TargetMode::Linear => {
            let frac = mask.count_ones() as f64 / p as f64;
            let t = a.target.blend(frac, b.target, 1.0 - frac)?;
            let raw = t.weights().to_vec();
            (t, raw)
        }
    };

    Ok(MixResult {
        mixed: PointCloud::new(points)?,
        mask,
        lam,
        w1,
        w2,
        target,
        raw_target,
        provenance: Provenance {
            source_a: a.patches.cloud().id().map(str::to_owned),
            source_b: b.patches.cloud().id().map(str::to_owned),
            assignment: assignment.clone(),
        },
    })
}

/// Patch mix at a fixed ratio; only the mask is random.
pub fn mix_patch_at(
    a: PatchSource<'_>,
    b: PatchSource<'_>,
    assignment: &Assignment,
    lam: f64,
    mode: TargetMode,
    rng: &mut MixRng,
) -> Result<MixResult> {
    let mask = sample_mask(a.patches.num_patches(), lam, rng)?;
    patch_mix_with_mask(a, b, assignment, mask, lam, mode)
}

/// Draws a ratio and a mask, then mixes at the patch level.
pub fn mix_patch(
    a: PatchSource<'_>,
    b: PatchSource<'_>,
    assignment: &Assignment,
    params: &MixParams,
    rng: &mut MixRng,
) -> Result<MixResult> {
    let lam = sample_lambda(params.beta, rng)?;
    mix_patch_at(a, b, assignment, lam, params.target_mode, rng)
}

/// Point-wise mix with a caller-chosen mask over the first cloud's points.
pub fn point_mix_with_mask(
    a: PointSource<'_>,
    b: PointSource<'_>,
    assignment: &Assignment,
    mask: Mask,
    lam: f64,
) -> Result<MixResult> {
    let n = a.cloud.len();
    if b.cloud.len() != n || assignment.len() != n || mask.len() != n {
        return Err(Error::param("clouds, assignment and mask must agree in size"));
    }
    check_targets(a.target, b.target)?;
    let perm = assignment.perm();
    let pa = a.cloud.points();
    let pb = b.cloud.points();
    let points = (0..n)
        .map(|i| if mask.get(i) { pa[i] } else { pb[perm[i]] })
        .collect();
    let frac = mask.count_ones() as f64 / n as f64;
    let target = a.target.blend(frac, b.target, 1.0 - frac)?;
    let raw_target = target.weights().to_vec();
    Ok(MixResult {
        mixed: PointCloud::new(points)?,
        mask,
        lam,
        w1: frac,
        w2: 1.0 - frac,
        target,
        raw_target,
        provenance: Provenance {
            source_a: a.cloud.id().map(str::to_owned),
            source_b: b.cloud.id().map(str::to_owned),
            assignment: assignment.clone(),
        },
    })
}

/// A seed point of `cloud` and its `floor(lam * N) - 1` nearest neighbors.
pub fn block_mask<R: Rng + ?Sized>(cloud: &PointCloud, lam: f64, rng: &mut R) -> Result<Mask> {
    check_lambda(lam)?;
    let n = cloud.len();
    let pts = cloud.points();
    let seed = rng.random_range(0..n);
    let k = selected_count(lam, n);
    let mut order: Vec<usize> = (0..n).filter(|&i| i != seed).collect();
    order.sort_by(|&x, &y| {
        dist2(&pts[x], &pts[seed])
            .total_cmp(&dist2(&pts[y], &pts[seed]))
            .then(x.cmp(&y))
    });
    let selected = std::iter::once(seed).chain(order).take(k);
    Ok(Mask::from_indices(n, selected))
}

pub fn mix_block_at(
    a: PointSource<'_>,
    b: PointSource<'_>,
    assignment: &Assignment,
    lam: f64,
    rng: &mut MixRng,
) -> Result<MixResult> {
    let mask = block_mask(a.cloud, lam, rng)?;
    point_mix_with_mask(a, b, assignment, mask, lam)
}

/// Block-level mix: a contiguous region around a random seed point of `a`.
pub fn mix_block(
    a: PointSource<'_>,
    b: PointSource<'_>,
    assignment: &Assignment,
    params: &MixParams,
    rng: &mut MixRng,
) -> Result<MixResult> {
    let lam = sample_lambda(params.beta, rng)?;
    mix_block_at(a, b, assignment, lam, rng)
}

pub fn mix_point_at(
    a: PointSource<'_>,
    b: PointSource<'_>,
    assignment: &Assignment,
    lam: f64,
    rng: &mut MixRng,
) -> Result<MixResult> {
    let mask = sample_mask(a.cloud.len(), lam, rng)?;
    point_mix_with_mask(a, b, assignment, mask, lam)
}

/// Point-level mix: uniformly chosen points of `a`.
pub fn mix_point(
    a: PointSource<'_>,
    b: PointSource<'_>,
    assignment: &Assignment,
    params: &MixParams,
    rng: &mut MixRng,
) -> Result<MixResult> {
    let lam = sample_lambda(params.beta, rng)?;
    mix_point_at(a, b, assignment, lam, rng)
}

/// How batch mixing chooses sample pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pairing {
    /// Per pass over the data, shuffle and pair each sample with its successor.
    #[default]
    Shuffle,
    /// Independent uniform draws of ordered pairs of distinct samples.
    AllPairsSample,
}

/// Deterministic list of `count` `(first, second)` index pairs.
pub fn plan_pairs(n: usize, pairing: Pairing, count: usize, seed: u64) -> Vec<(usize, usize)> {
    if n == 0 {
        return Vec::new();
    }
    let mut rng = rng::stream(seed, rng::PAIRING_STREAM);
    let mut pairs = Vec::with_capacity(count);
    match pairing {
        Pairing::Shuffle => {
            let mut order: Vec<usize> = (0..n).collect();
            while pairs.len() < count {
                rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
                for i in 0..n {
                    if pairs.len() == count {
                        break;
                    }
                    pairs.push((order[i], order[(i + 1) % n]));
                }
            }
        }
        Pairing::AllPairsSample => {
            for _ in 0..count {
                if n == 1 {
                    pairs.push((0, 0));
                    continue;
                }
                let i = rng.random_range(0..n);
                let mut j = rng.random_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                pairs.push((i, j));
            }
        }
    }
    pairs
}

/// Settings for [`batch_mix`].
#[derive(Debug, Clone, PartialEq)]
pub struct BatchConfig {
    pub patches: usize,
    pub patch_size: usize,
    pub fps_start: FpsStart,
    pub assign: AssignMode,
    pub params: MixParams,
    pub pairing: Pairing,
    pub count: usize,
    pub label_space: LabelSpace,
    pub parallel: bool,
}

struct Prepared {
    id: String,
    cloud: PointCloud,
    patches: Option<PatchSet>,
    target: TargetDist,
}

/// Dataset prepared for repeated pair mixing: partitioned once, labels
/// expanded to one-hot targets.
pub struct Mixer<'a> {
    samples: Vec<Prepared>,
    scores: Option<&'a ScoreCache>,
    config: BatchConfig,
    uniform: Option<ScoreVector>,
}

impl<'a> Mixer<'a> {
    pub fn new(dataset: &[PointCloud], scores: Option<&'a ScoreCache>, config: BatchConfig) -> Result<Self> {
        config.params.validate()?;
        let n_points = dataset.first().map(PointCloud::len);
        let prepare = |(i, cloud): (usize, &PointCloud)| -> Result<Prepared> {
            let id = cloud
                .id()
                .map(str::to_owned)
                .unwrap_or_else(|| format!("sample_{i}"));
            if Some(cloud.len()) != n_points {
                return Err(Error::param(format!(
                    "{id}: {} points, expected {}",
                    cloud.len(),
                    n_points.unwrap_or(0)
                )));
            }
            let label = cloud
                .label()
                .ok_or_else(|| Error::param(format!("{id}: missing class label")))?;
            let target = config
                .label_space
                .one_hot(label)
                .map_err(|e| Error::param(format!("{id}: {e}")))?;
            let patches = match config.params.level {
                MixLevel::Patch => Some(
                    partition(cloud, config.patches, config.patch_size, config.fps_start)
                        .map_err(|e| Error::param(format!("{id}: {e}")))?,
                ),
                _ => None,
            };
            Ok(Prepared {
                id,
                cloud: cloud.clone(),
                patches,
                target,
            })
        };
        let samples = if config.parallel {
            dataset.par_iter().enumerate().map(prepare).collect::<Result<Vec<_>>>()?
        } else {
            dataset.iter().enumerate().map(prepare).collect::<Result<Vec<_>>>()?
        };
        let uniform = match (config.params.level, config.params.target_mode, scores) {
            (MixLevel::Patch, TargetMode::Linear, None) => Some(uniform_scores(config.patches)?),
            _ => None,
        };
        Ok(Self {
            samples,
            scores,
            config,
            uniform,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_id(&self, i: usize) -> &str {
        &self.samples[i].id
    }

    pub fn config(&self) -> &BatchConfig {
        &self.config
    }

    fn scores_for(&self, i: usize) -> Result<&ScoreVector> {
        let id = &self.samples[i].id;
        match self.scores {
            Some(cache) => cache
                .get(id)
                .ok_or_else(|| Error::Cache(format!("no score entry for sample {id}"))),
            None => self
                .uniform
                .as_ref()
                .ok_or_else(|| Error::Cache(format!("score mode needs a score cache (sample {id})"))),
        }
    }

    /// Mixes samples `i` and `j`. With `lambda` set, the ratio is fixed and
    /// only the mask (or seed point) is random.
    pub fn mix_pair(&self, i: usize, j: usize, lambda: Option<f64>, rng: &mut MixRng) -> Result<MixResult> {
        let (sa, sb) = (&self.samples[i], &self.samples[j]);
        let params = &self.config.params;
        let lam = match lambda {
            Some(l) => l,
            None => sample_lambda(params.beta, rng)?,
        };
        match params.level {
            MixLevel::Patch => {
                let (pa, pb) = (
                    sa.patches.as_ref().expect("partitioned at patch level"),
                    sb.patches.as_ref().expect("partitioned at patch level"),
                );
                let a = PatchSource {
                    patches: pa,
                    target: &sa.target,
                    scores: self.scores_for(i)?,
                };
                let b = PatchSource {
                    patches: pb,
                    target: &sb.target,
                    scores: self.scores_for(j)?,
                };
                let asg = patch_assignment(pa, pb, self.config.assign)?;
                mix_patch_at(a, b, &asg, lam, params.target_mode, rng)
            }
            MixLevel::Block | MixLevel::Point => {
                let a = PointSource {
                    cloud: &sa.cloud,
                    target: &sa.target,
                };
                let b = PointSource {
                    cloud: &sb.cloud,
                    target: &sb.target,
                };
                let asg = point_assignment(&sa.cloud, &sb.cloud)?;
                if params.level == MixLevel::Block {
                    mix_block_at(a, b, &asg, lam, rng)
                } else {
                    mix_point_at(a, b, &asg, lam, rng)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchItem {
    pub index: usize,
    pub out_id: String,
    pub result: MixResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchFailure {
    pub index: usize,
    pub source_a: String,
    pub source_b: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BatchReport {
    pub items: Vec<BatchItem>,
    pub failures: Vec<BatchFailure>,
}

/// Output id for the `index`-th batch result.
pub fn batch_out_id(index: usize) -> String {
    format!("mix_{index:06}")
}

/// Generates `config.count` mixes from deterministic pairs. Pair `k` draws
/// from its own random stream, so parallel and serial runs agree exactly.
/// Per-pair problems such as missing scores are collected, not raised.
pub fn batch_mix(dataset: &[PointCloud], scores: Option<&ScoreCache>, config: BatchConfig) -> Result<BatchReport> {
    if config.count == 0 {
        return Ok(BatchReport::default());
    }
    if dataset.is_empty() {
        return Err(Error::param("cannot mix an empty dataset"));
    }
    let seed = config.params.seed;
    let pairs = plan_pairs(dataset.len(), config.pairing, config.count, seed);
    let parallel = config.parallel;
    let mixer = Mixer::new(dataset, scores, config)?;
    let run = |(k, &(i, j)): (usize, &(usize, usize))| {
        let mut rng = rng::stream(seed, k as u64);
        (k, i, j, mixer.mix_pair(i, j, None, &mut rng))
    };
    let outcomes: Vec<_> = if parallel {
        pairs.par_iter().enumerate().map(run).collect()
    } else {
        pairs.iter().enumerate().map(run).collect()
    };
    let mut report = BatchReport::default();
    for (k, i, j, outcome) in outcomes {
        match outcome {
            Ok(result) => report.items.push(BatchItem {
                index: k,
                out_id: batch_out_id(k),
                result,
            }),
            Err(e) => report.failures.push(BatchFailure {
                index: k,
                source_a: mixer.sample_id(i).to_owned(),
                source_b: mixer.sample_id(j).to_owned(),
                reason: e.to_string(),
            }),
        }
    }
    Ok(report)
}

/// One manifest line:
/// `<out-id>\t<src1>\t<src2>\t<lambda>\t<mask-popcount>\t<w1>\t<w2>\t<target>`
/// where the target is `C` space-separated floats.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRecord {
    pub out_id: String,
    pub source_a: String,
    pub source_b: String,
    pub lambda: f64,
    pub popcount: usize,
    pub w1: f64,
    pub w2: f64,
    pub target: Vec<f64>,
}

impl ManifestRecord {
    /// With `raw_target`, the unnormalized `w1 * y1 + w2 * y2` is recorded.
    pub fn from_result(out_id: &str, result: &MixResult, raw_target: bool) -> Self {
        Self {
            out_id: out_id.to_owned(),
            source_a: result.provenance.source_a.clone().unwrap_or_default(),
            source_b: result.provenance.source_b.clone().unwrap_or_default(),
            lambda: result.lam,
            popcount: result.mask.count_ones(),
            w1: result.w1,
            w2: result.w2,
            target: if raw_target {
                result.raw_target.clone()
            } else {
                result.target.weights().to_vec()
            },
        }
    }

    pub fn to_line(&self) -> String {
        let target: Vec<String> = self.target.iter().map(|v| v.to_string()).collect();
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.out_id,
            self.source_a,
            self.source_b,
            self.lambda,
            self.popcount,
            self.w1,
            self.w2,
            target.join(" ")
        )
    }

    pub fn parse_line(line: &str) -> std::result::Result<Self, String> {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 8 {
            return Err(format!("expected 8 tab-separated fields, found {}", fields.len()));
        }
        let num = |i: usize, name: &str| -> std::result::Result<f64, String> {
            fields[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("invalid {name} {:?}", fields[i]))
        };
        let target = fields[7]
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| format!("invalid target value {t:?}")))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if target.is_empty() {
            return Err("empty target".into());
        }
        Ok(Self {
            out_id: fields[0].to_owned(),
            source_a: fields[1].to_owned(),
            source_b: fields[2].to_owned(),
            lambda: num(3, "lambda")?,
            popcount: fields[4]
                .parse()
                .map_err(|_| format!("invalid popcount {:?}", fields[4]))?,
            w1: num(5, "w1")?,
            w2: num(6, "w2")?,
            target,
        })
    }
}

pub fn encode_manifest(records: &[ManifestRecord]) -> String {
    records.iter().map(|r| r.to_line() + "\n").collect()
}

/// Parses a manifest; errors name the 1-based line.
pub fn decode_manifest(text: &str) -> Result<Vec<ManifestRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            ManifestRecord::parse_line(l)
                .map_err(|m| Error::format(crate::error::Offset::Line(i + 1), m))
        })
        .collect()
}
