//! Point clouds, cameras, normalization, neighbor graphs and synthetic scenes.

mod camera;
mod knn;
mod normalize;
mod synth;

pub use camera::{CameraModel, Projection, CULL_DEPTH};
pub use knn::{knn, knn_with, NeighborGraph};
pub use normalize::{normalize_kitti, normalize_unit, BBox3D};
pub use synth::{gen_lidar, gen_lidar_labeled, gen_sphere};

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Row-major table of per-point feature vectors sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct PointFeatures {
    dim: usize,
    data: Vec<f64>,
}

impl PointFeatures {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("feature dimension must be at least 1"));
        }
        if data.len() % dim != 0 {
            return Err(Error::invalid(format!(
                "feature buffer of length {} is not a multiple of dimension {dim}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite feature value"));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows
            .first()
            .map(|r| r.as_ref().len())
            .ok_or_else(|| Error::invalid("no feature rows"))?;
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::invalid(format!(
                    "feature row {i} has dimension {}, expected {dim}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// An ordered, non-empty set of 3D points with optional per-point features.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Vec3>,
    features: Option<PointFeatures>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("point cloud must contain at least one point"));
        }
        if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid(format!("point {i} has a non-finite coordinate")));
        }
        Ok(Self { points, features: None })
    }

    pub fn from_arrays(points: &[[f64; 3]]) -> Result<Self> {
        Self::new(points.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect())
    }

    pub fn with_features(mut self, features: PointFeatures) -> Result<Self> {
        if features.len() != self.points.len() {
            return Err(Error::invalid(format!(
                "{} feature rows for {} points",
                features.len(),
                self.points.len()
            )));
        }
        self.features = Some(features);
        Ok(self)
    }

    pub fn without_features(mut self) -> Self {
        self.features = None;
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn point(&self, i: usize) -> Vec3 {
        self.points[i]
    }

    pub fn features(&self) -> Option<&PointFeatures> {
        self.features.as_ref()
    }

    /// Replaces the coordinates, keeping features. Used by perturbation
    /// experiments; the new coordinates must be finite and match in count.
    pub fn with_points(&self, points: Vec<Vec3>) -> Result<Self> {
        if points.len() != self.points.len() {
            return Err(Error::invalid("point count changed"));
        }
        let mut out = Self::new(points)?;
        out.features = self.features.clone();
        Ok(out)
    }

    pub fn centroid(&self) -> Vec3 {
        let sum = self.points.iter().fold(Vec3::zeros(), |acc, p| acc + p);
        sum / self.points.len() as f64
    }

    /// Coordinate pseudo-colors: each coordinate mapped from [-1, 1] to
    /// [0, 1] and clamped. Meaningful for clouds inside the unit ball (see
    /// [`normalize_unit`]).
    pub fn ccm_colors(&self) -> PointFeatures {
        let data = self
            .points
            .iter()
            .flat_map(|p| p.iter().map(|c| ((c + 1.0) * 0.5).clamp(0.0, 1.0)).collect::<Vec<_>>())
            .collect();
        PointFeatures { dim: 3, data }
    }

    /// The CCM feature table: attached 3-channel features when present,
    /// otherwise [`Self::ccm_colors`].
    pub fn ccm_features(&self) -> PointFeatures {
        match &self.features {
            Some(f) if f.dim() == 3 => f.clone(),
            _ => self.ccm_colors(),
        }
    }
}
