//! Domain types shared by every stage of the pipeline.

use crate::error::{Error, Result};

pub type Point = [f32; 3];

/// An ordered set of 3D points with an optional class label.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point>,
    label: Option<u32>,
    num_classes: Option<u32>,
    id: Option<String>,
}

impl PointCloud {
    /// Builds a cloud, rejecting empty input and non-finite coordinates.
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::param("point cloud must contain at least one point"));
        }
        if let Some(i) = points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::param(format!("point {i} has a non-finite coordinate")));
        }
        Ok(Self {
            points,
            label: None,
            num_classes: None,
            id: None,
        })
    }

    /// Attaches a label. When `num_classes` is given the label must lie in `[0, C)`
    /// and `C` must be at least 2.
    pub fn with_label(mut self, label: u32, num_classes: Option<u32>) -> Result<Self> {
        if let Some(c) = num_classes {
            LabelSpace::new(c)?;
            if label >= c {
                return Err(Error::param(format!(
                    "label {label} out of range for {c} classes"
                )));
            }
        }
        self.label = Some(label);
        self.num_classes = num_classes;
        Ok(self)
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = Some(id.into());
        self
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false for a constructed cloud; present for API symmetry.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn label(&self) -> Option<u32> {
        self.label
    }

    pub fn num_classes(&self) -> Option<u32> {
        self.num_classes
    }

    pub fn id(&self) -> Option<&str> {
        self.id.as_deref()
    }

    /// Same label/id metadata, new coordinates.
    pub fn with_points(&self, points: Vec<Point>) -> Result<Self> {
        let mut out = PointCloud::new(points)?;
        out.label = self.label;
        out.num_classes = self.num_classes;
        out.id = self.id.clone();
        Ok(out)
    }

    pub fn centroid(&self) -> [f64; 3] {
        let mut acc = [0.0f64; 3];
        for p in &self.points {
            for k in 0..3 {
                acc[k] += p[k] as f64;
            }
        }
        let n = self.points.len() as f64;
        acc.map(|v| v / n)
    }
}

/// Centers the cloud at the origin and scales it into the unit sphere.
///
/// A cloud whose points all coincide collapses to the origin.
pub fn normalize_cloud(cloud: &PointCloud) -> PointCloud {
    let c = cloud.centroid();
    let centered: Vec<[f64; 3]> = cloud
        .points()
        .iter()
        .map(|p| [p[0] as f64 - c[0], p[1] as f64 - c[1], p[2] as f64 - c[2]])
        .collect();
    let radius = centered
        .iter()
        .map(|p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt())
        .fold(0.0f64, f64::max);
    let scale = if radius > 0.0 { 1.0 / radius } else { 0.0 };
    let points = centered
        .iter()
        .map(|p| [(p[0] * scale) as f32, (p[1] * scale) as f32, (p[2] * scale) as f32])
        .collect();
    cloud
        .with_points(points)
        .expect("normalization preserves finiteness and point count")
}

/// Number of classes plus optional display names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSpace {
    num_classes: u32,
    class_names: Option<Vec<String>>,
}

impl LabelSpace {
    pub fn new(num_classes: u32) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::param(format!(
                "label space needs at least 2 classes, got {num_classes}"
            )));
        }
        Ok(Self {
            num_classes,
            class_names: None,
        })
    }

    pub fn with_names(num_classes: u32, names: Vec<String>) -> Result<Self> {
        let mut space = Self::new(num_classes)?;
        if names.len() != num_classes as usize {
            return Err(Error::param(format!(
                "expected {num_classes} class names, got {}",
                names.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(Error::param(format!("duplicate class name {n:?}")));
            }
        }
        space.class_names = Some(names);
        Ok(space)
    }

    pub fn num_classes(&self) -> u32 {
        self.num_classes
    }

    pub fn class_names(&self) -> Option<&[String]> {
        self.class_names.as_deref()
    }

    pub fn one_hot(&self, label: u32) -> Result<TargetDist> {
        if label >= self.num_classes {
            return Err(Error::param(format!(
                "label {label} out of range for {} classes",
                self.num_classes
            )));
        }
        let mut w = vec![0.0; self.num_classes as usize];
        w[label as usize] = 1.0;
        Ok(TargetDist { weights: w })
    }
}

/// Tolerance on the sum of a target distribution.
pub const TARGET_SUM_TOL: f64 = 1e-9;

/// A probability distribution over classes.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetDist {
    weights: Vec<f64>,
}

impl TargetDist {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::param("target weights must be finite and non-negative"));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > TARGET_SUM_TOL {
            return Err(Error::param(format!("target weights sum to {sum}, expected 1")));
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn num_classes(&self) -> usize {
        self.weights.len()
    }

    /// `(w1 * self + w2 * other) / (w1 + w2)`.
    pub fn blend(&self, w1: f64, other: &TargetDist, w2: f64) -> Result<TargetDist> {
        if self.weights.len() != other.weights.len() {
            return Err(Error::param(format!(
                "target class counts differ: {} vs {}",
                self.weights.len(),
                other.weights.len()
            )));
        }
        let total = w1 + w2;
        if !(total > 0.0) {
            return Err(Error::Mixing(format!(
                "blend weights sum to {total}; cannot normalize"
            )));
        }
        let weights = self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (w1 * a + w2 * b) / total)
            .collect();
        TargetDist::new(weights)
    }
}

/// Binary selection over patches (or points). `true` selects the first source.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            bits: vec![false; len],
        }
    }

    pub fn from_indices(len: usize, selected: impl IntoIterator<Item = usize>) -> Self {
        let mut m = Self::zeros(len);
        for i in selected {
            m.bits[i] = true;
        }
        m
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_nan() {
        assert!(PointCloud::new(vec![]).is_err());
        assert!(PointCloud::new(vec![[0.0, 0.0, f32::NAN]]).is_err());
        assert!(PointCloud::new(vec![[0.0, f32::INFINITY, 0.0]]).is_err());
    }

    #[test]
    fn label_range_checked() {
        let c = PointCloud::new(vec![[0.0; 3]]).unwrap();
        assert!(c.clone().with_label(3, Some(3)).is_err());
        assert!(c.clone().with_label(0, Some(1)).is_err());
        assert!(c.with_label(2, Some(3)).is_ok());
    }

    #[test]
    fn normalize_two_points() {
        let c = PointCloud::new(vec![[2.0, 0.0, 0.0], [4.0, 0.0, 0.0]]).unwrap();
        let n = normalize_cloud(&c);
        assert_eq!(n.points(), &[[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
    }

    #[test]
    fn normalize_single_point_collapses() {
        let c = PointCloud::new(vec![[5.0, 5.0, 5.0]]).unwrap();
        assert_eq!(normalize_cloud(&c).points(), &[[0.0, 0.0, 0.0]]);
    }

    #[test]
    fn normalize_is_idempotent() {
        let pts: Vec<Point> = (0..50)
            .map(|i| {
                let t = i as f32 * 0.37;
                [t.sin() * 3.0 + 1.0, t.cos() * 2.0 - 4.0, (t * 1.3).sin()]
            })
            .collect();
        let once = normalize_cloud(&PointCloud::new(pts).unwrap());
        let c = once.centroid();
        assert!(c.iter().all(|v| v.abs() < 1e-6));
        let r = once
            .points()
            .iter()
            .map(|p| (p.iter().map(|v| (*v as f64).powi(2)).sum::<f64>()).sqrt())
            .fold(0.0, f64::max);
        assert!((r - 1.0).abs() < 1e-6);
        let twice = normalize_cloud(&once);
        for (a, b) in once.points().iter().zip(twice.points()) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn target_blend_normalizes() {
        let space = LabelSpace::new(3).unwrap();
        let y1 = space.one_hot(0).unwrap();
        let y2 = space.one_hot(2).unwrap();
        let t = y1.blend(0.9, &y2, 0.5).unwrap();
        assert!((t.weights()[0] - 0.9 / 1.4).abs() < 1e-15);
        assert!((t.weights()[2] - 0.5 / 1.4).abs() < 1e-15);
        assert!(y1.blend(0.0, &y2, 0.0).is_err());
    }

    #[test]
    fn label_space_names_unique() {
        assert!(LabelSpace::with_names(2, vec!["a".into(), "a".into()]).is_err());
        assert!(LabelSpace::with_names(2, vec!["a".into(), "b".into()]).is_ok());
        assert!(LabelSpace::new(1).is_err());
    }
}
