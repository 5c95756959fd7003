//! Farthest-point-sampled patch partitioning.
//!
//! A [`PatchSet`] is a disjoint exact cover of a cloud by `P` patches of `s`
//! points each. Centers are chosen by farthest point sampling; points are then
//! grouped by a greedy capacity-bounded nearest-center pass over all
//! (point, center) pairs in ascending distance order.

use rand::Rng;

use crate::cloud::{Point, PointCloud};
use crate::error::{Error, Result};
use crate::rng;

/// Default number of points per patch.
pub const DEFAULT_PATCH_SIZE: usize = 32;

/// How farthest point sampling picks its first center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FpsStart {
    /// The point nearest the centroid (lowest index on ties). Seed-independent.
    #[default]
    Centroid,
    /// A uniform draw from a generator seeded with this value.
    Seeded(u64),
}

#[inline]
pub(crate) fn dist2(a: &Point, b: &Point) -> f64 {
    let dx = a[0] as f64 - b[0] as f64;
    let dy = a[1] as f64 - b[1] as f64;
    let dz = a[2] as f64 - b[2] as f64;
    dx * dx + dy * dy + dz * dz
}

/// Selects `count` center indices by farthest point sampling.
///
/// Each new center maximizes its minimum distance to the centers chosen so
/// far; ties go to the lowest point index.
pub fn fps_centers(cloud: &PointCloud, count: usize, start: FpsStart) -> Result<Vec<usize>> {
    let n = cloud.len();
    if count == 0 || count > n {
        return Err(Error::param(format!(
            "center count must be in 1..={n}, got {count}"
        )));
    }
    let pts = cloud.points();
    let first = match start {
        FpsStart::Centroid => {
            let c = cloud.centroid();
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (i, p) in pts.iter().enumerate() {
                let d: f64 = (0..3).map(|k| (p[k] as f64 - c[k]).powi(2)).sum();
                if d < best_d {
                    best_d = d;
                    best = i;
                }
            }
            best
        }
        FpsStart::Seeded(seed) => rng::stream(seed, rng::FPS_STREAM).random_range(0..n),
    };

    let mut centers = Vec::with_capacity(count);
    centers.push(first);
    let mut min_d: Vec<f64> = pts.iter().map(|p| dist2(p, &pts[first])).collect();
    let mut chosen = vec![false; n];
    chosen[first] = true;
    while centers.len() < count {
        let mut best = usize::MAX;
        let mut best_d = f64::NEG_INFINITY;
        for (i, d) in min_d.iter().enumerate() {
            if !chosen[i] && *d > best_d {
                best_d = *d;
                best = i;
            }
        }
        chosen[best] = true;
        centers.push(best);
        let c = pts[best];
        for (d, p) in min_d.iter_mut().zip(pts) {
            let nd = dist2(p, &c);
            if nd < *d {
                *d = nd;
            }
        }
    }
    Ok(centers)
}

/// A disjoint, balanced partition of a cloud into patches.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSet {
    cloud: PointCloud,
    centers: Vec<usize>,
    membership: Vec<Vec<usize>>,
    patch_size: usize,
}

impl PatchSet {
    /// Assembles a patch set from externally produced parts, checking that the
    /// membership is an exact cover with equal-size patches and that every
    /// center is a member of its own patch's cloud.
    pub fn from_parts(
        cloud: PointCloud,
        centers: Vec<usize>,
        membership: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let n = cloud.len();
        if centers.is_empty() || centers.len() != membership.len() {
            return Err(Error::param(format!(
                "{} centers for {} patches",
                centers.len(),
                membership.len()
            )));
        }
        let s = membership[0].len();
        if s == 0 || centers.len() * s != n {
            return Err(Error::param(format!(
                "{} patches of {s} points do not cover {n} points",
                centers.len()
            )));
        }
        if let Some(&c) = centers.iter().find(|&&c| c >= n) {
            return Err(Error::param(format!("center index {c} out of range")));
        }
        let mut seen = vec![false; n];
        for (p, members) in membership.iter().enumerate() {
            if members.len() != s {
                return Err(Error::param(format!(
                    "patch {p} has {} points, expected {s}",
                    members.len()
                )));
            }
            for &i in members {
                if i >= n || seen[i] {
                    return Err(Error::param(format!(
                        "point index {i} out of range or in more than one patch"
                    )));
                }
                seen[i] = true;
            }
        }
        Ok(Self {
            cloud,
            centers,
            membership,
            patch_size: s,
        })
    }

    pub fn cloud(&self) -> &PointCloud {
        &self.cloud
    }

    pub fn num_patches(&self) -> usize {
        self.centers.len()
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    /// Indices of the source points chosen as patch centers.
    pub fn center_indices(&self) -> &[usize] {
        &self.centers
    }

    pub fn centers(&self) -> Vec<Point> {
        let pts = self.cloud.points();
        self.centers.iter().map(|&i| pts[i]).collect()
    }

    pub fn membership(&self) -> &[Vec<usize>] {
        &self.membership
    }

    pub fn members(&self, patch: usize) -> &[usize] {
        &self.membership[patch]
    }

    /// Absolute coordinates of the points in one patch, in membership order.
    pub fn patch_points(&self, patch: usize) -> Vec<Point> {
        let pts = self.cloud.points();
        self.membership[patch].iter().map(|&i| pts[i]).collect()
    }

    /// Largest distance from each patch's center to its members.
    pub fn patch_radii(&self) -> Vec<f64> {
        let pts = self.cloud.points();
        self.centers
            .iter()
            .zip(&self.membership)
            .map(|(&c, members)| {
                members
                    .iter()
                    .map(|&i| dist2(&pts[i], &pts[c]))
                    .fold(0.0f64, f64::max)
                    .sqrt()
            })
            .collect()
    }

    pub fn mean_patch_radius(&self) -> f64 {
        let r = self.patch_radii();
        r.iter().sum::<f64>() / r.len() as f64
    }
}

/// Splits `cloud` into `patches` groups of exactly `patch_size` points.
pub fn partition(
    cloud: &PointCloud,
    patches: usize,
    patch_size: usize,
    start: FpsStart,
) -> Result<PatchSet> {
    let n = cloud.len();
    if patches == 0 || patch_size == 0 || patches.checked_mul(patch_size) != Some(n) {
        return Err(Error::param(format!(
            "cannot split N={n} points into P={patches} patches of s={patch_size}"
        )));
    }
    let centers = fps_centers(cloud, patches, start)?;
    let pts = cloud.points();

    let mut pairs: Vec<(f64, u32, u32)> = Vec::with_capacity(n * patches);
    for (i, p) in pts.iter().enumerate() {
        for (c, &ci) in centers.iter().enumerate() {
            pairs.push((dist2(p, &pts[ci]), i as u32, c as u32));
        }
    }
    pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut assigned = vec![false; n];
    let mut membership: Vec<Vec<usize>> = vec![Vec::with_capacity(patch_size); patches];
    let mut remaining = n;
    for (_, i, c) in pairs {
        let (i, c) = (i as usize, c as usize);
        if assigned[i] || membership[c].len() >= patch_size {
            continue;
        }
        assigned[i] = true;
        membership[c].push(i);
        remaining -= 1;
        if remaining == 0 {
            break;
        }
    }
    PatchSet::from_parts(cloud.clone(), centers, membership)
}

/// `P = N / s` partition with the default start.
pub fn partition_by_size(cloud: &PointCloud, patch_size: usize) -> Result<PatchSet> {
    if patch_size == 0 || !cloud.len().is_multiple_of(patch_size) {
        return Err(Error::param(format!(
            "N={} is not divisible by s={patch_size}",
            cloud.len()
        )));
    }
    partition(cloud, cloud.len() / patch_size, patch_size, FpsStart::Centroid)
}

/// Overlapping k-nearest-neighbor groups around FPS centers, as produced by
/// transformer tokenizers. Useful for aligning scores with a teacher's tokens;
/// not a valid mixing input since groups may share points.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnGroups {
    pub centers: Vec<usize>,
    pub groups: Vec<Vec<usize>>,
}

pub fn knn_groups(cloud: &PointCloud, count: usize, k: usize, start: FpsStart) -> Result<KnnGroups> {
    if k == 0 || k > cloud.len() {
        return Err(Error::param(format!(
            "neighbor count must be in 1..={}, got {k}",
            cloud.len()
        )));
    }
    let centers = fps_centers(cloud, count, start)?;
    let pts = cloud.points();
    let groups = centers
        .iter()
        .map(|&c| {
            let mut idx: Vec<usize> = (0..pts.len()).collect();
            idx.sort_by(|&a, &b| {
                dist2(&pts[a], &pts[c])
                    .total_cmp(&dist2(&pts[b], &pts[c]))
                    .then(a.cmp(&b))
            });
            idx.truncate(k);
            idx
        })
        .collect();
    Ok(KnnGroups { centers, groups })
}
