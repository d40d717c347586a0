use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in model coordinates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn dot(&self, other: &Point3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

impl Add for Point3 {
    type Output = Point3;
    fn add(self, rhs: Point3) -> Point3 {
        Point3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl Sub for Point3 {
    type Output = Point3;
    fn sub(self, rhs: Point3) -> Point3 {
        Point3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Point3;
    fn mul(self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Role of a point inside an occlusion sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointLabel {
    Partial,
    Missing,
    Interface,
}

/// Ordered set of finite points with optional per-point labels.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    points: Vec<Point3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<PointLabel>>,
}

impl PointCloud {
    /// Builds a cloud, rejecting NaN or infinite coordinates.
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if let Some(index) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { points, labels: None })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn with_labels(mut self, labels: Vec<PointLabel>) -> Result<Self> {
        if labels.len() != self.points.len() {
            return Err(Error::InvalidParameter(format!(
                "{} labels for {} points",
                labels.len(),
                self.points.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn labels(&self) -> Option<&[PointLabel]> {
        self.labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn count(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn get(&self, i: usize) -> Option<Point3> {
        self.points.get(i).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Point3> {
        self.points.iter()
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }

    /// Sub-cloud made of the given indices, in the given order. Labels are dropped.
    pub fn select(&self, indices: &[usize]) -> Result<PointCloud> {
        let mut out = Vec::with_capacity(indices.len());
        for &i in indices {
            match self.points.get(i) {
                Some(p) => out.push(*p),
                None => {
                    return Err(Error::InvalidParameter(format!(
                        "index {i} out of range for cloud of {}",
                        self.points.len()
                    )))
                }
            }
        }
        Ok(PointCloud { points: out, labels: None })
    }

    /// Concatenation `self ++ other`; labels are kept only if both sides carry them.
    pub fn concat(&self, other: &PointCloud) -> PointCloud {
        let mut points = self.points.clone();
        points.extend_from_slice(&other.points);
        let labels = match (&self.labels, &other.labels) {
            (Some(a), Some(b)) => Some(a.iter().chain(b.iter()).copied().collect()),
            _ => None,
        };
        PointCloud { points, labels }
    }

    /// Flattened `[x0, y0, z0, x1, ...]` coordinates.
    pub fn to_flat(&self) -> Vec<f64> {
        self.points.iter().flat_map(|p| p.to_array()).collect()
    }

    pub fn from_flat(flat: &[f64]) -> Result<PointCloud> {
        if !flat.len().is_multiple_of(3) {
            return Err(Error::InvalidParameter(format!(
                "flat coordinate buffer of length {} is not a multiple of 3",
                flat.len()
            )));
        }
        PointCloud::new(
            flat.chunks_exact(3)
                .map(|c| Point3::new(c[0], c[1], c[2]))
                .collect(),
        )
    }
}

impl std::ops::Index<usize> for PointCloud {
    type Output = Point3;
    fn index(&self, i: usize) -> &Point3 {
        &self.points[i]
    }
}

impl<'a> IntoIterator for &'a PointCloud {
    type Item = &'a Point3;
    type IntoIter = std::slice::Iter<'a, Point3>;
    fn into_iter(self) -> Self::IntoIter {
        self.points.iter()
    }
}
