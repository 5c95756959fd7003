//! Robustness perturbations: jitter, axis rotation, scaling, point dropout.

use nalgebra::{Rotation3, Vector3};
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::cloud::{Point, PointCloud};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    fn unit(self) -> nalgebra::Unit<Vector3<f64>> {
        match self {
            Axis::X => Vector3::x_axis(),
            Axis::Y => Vector3::y_axis(),
            Axis::Z => Vector3::z_axis(),
        }
    }
}

/// Adds independent `N(0, sigma^2)` noise to every coordinate.
pub fn jitter<R: Rng + ?Sized>(cloud: &PointCloud, sigma: f64, rng: &mut R) -> Result<PointCloud> {
    let normal = Normal::new(0.0, sigma)
        .map_err(|e| Error::param(format!("invalid jitter sigma {sigma}: {e}")))?;
    let points = cloud
        .points()
        .iter()
        .map(|p| p.map(|c| (c as f64 + normal.sample(rng)) as f32))
        .collect();
    cloud.with_points(points)
}

/// Rotates every point by `degrees` about `axis`.
pub fn rotate(cloud: &PointCloud, axis: Axis, degrees: f64) -> Result<PointCloud> {
    let rot = Rotation3::from_axis_angle(&axis.unit(), degrees.to_radians());
    let points = cloud
        .points()
        .iter()
        .map(|p| {
            let v = rot * Vector3::new(p[0] as f64, p[1] as f64, p[2] as f64);
            [v.x as f32, v.y as f32, v.z as f32]
        })
        .collect();
    cloud.with_points(points)
}

/// Rotation about `axis` by an angle drawn uniformly from `[-max_deg, max_deg]`.
/// Returns the rotated cloud and the angle used.
pub fn random_rotate<R: Rng + ?Sized>(
    cloud: &PointCloud,
    axis: Axis,
    max_deg: f64,
    rng: &mut R,
) -> Result<(PointCloud, f64)> {
    if !(max_deg >= 0.0 && max_deg.is_finite()) {
        return Err(Error::param(format!("invalid rotation range {max_deg}")));
    }
    let angle = if max_deg == 0.0 {
        0.0
    } else {
        rng.random_range(-max_deg..=max_deg)
    };
    Ok((rotate(cloud, axis, angle)?, angle))
}

/// Multiplies every coordinate by `factor`.
pub fn scale(cloud: &PointCloud, factor: f64) -> Result<PointCloud> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(Error::param(format!("scale factor must be positive, got {factor}")));
    }
    let points: Vec<Point> = cloud
        .points()
        .iter()
        .map(|p| p.map(|c| (c as f64 * factor) as f32))
        .collect();
    cloud.with_points(points)
}

/// Points kept when dropping a fraction `ratio`: `ceil((1 - ratio) * N)`.
pub fn kept_after_drop(n: usize, ratio: f64) -> usize {
    // nudge below integers so float noise does not round up an exact product
    let keep = ((1.0 - ratio) * n as f64 - 1e-9).ceil();
    (keep.max(0.0) as usize).min(n)
}

/// Removes `ratio` of the points uniformly at random, keeping
/// `ceil((1 - ratio) * N)` in their original order.
pub fn drop_points<R: Rng + ?Sized>(cloud: &PointCloud, ratio: f64, rng: &mut R) -> Result<PointCloud> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::param(format!("drop ratio must lie in [0, 1), got {ratio}")));
    }
    let n = cloud.len();
    let keep = kept_after_drop(n, ratio).max(1);
    let mut idx = index::sample(rng, n, keep).into_vec();
    idx.sort_unstable();
    let pts = cloud.points();
    cloud.with_points(idx.into_iter().map(|i| pts[i]).collect())
}
