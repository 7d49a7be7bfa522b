use serde::{Deserialize, Serialize};

use super::{PointCloud, Vec3};
use crate::error::{Error, Result};

/// Oriented 3D box: center, (length, width, height) and yaw about +z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox3D {
    pub center: [f64; 3],
    pub dims: [f64; 3],
    pub yaw: f64,
}

impl BBox3D {
    pub fn validate(&self) -> Result<()> {
        let finite = self.center.iter().chain(&self.dims).all(|v| v.is_finite()) && self.yaw.is_finite();
        if !finite {
            return Err(Error::invalid("bounding box has non-finite fields"));
        }
        if self.dims.iter().any(|&d| d <= 0.0) {
            return Err(Error::invalid(format!(
                "bounding box dims must be positive, got {:?}",
                self.dims
            )));
        }
        Ok(())
    }
}

/// Centers the cloud at its centroid and scales so the farthest point has
/// unit norm. A cloud with zero extent maps to the origin with scale 1.
pub fn normalize_unit(cloud: &PointCloud) -> PointCloud {
    let c = cloud.centroid();
    let centered: Vec<Vec3> = cloud.points().iter().map(|p| p - c).collect();
    let max_norm = centered.iter().map(|p| p.norm()).fold(0.0, f64::max);
    let scale = if max_norm > 0.0 { max_norm } else { 1.0 };
    let points = centered.into_iter().map(|p| p / scale).collect();
    cloud
        .with_points(points)
        .expect("normalization preserves count and finiteness")
}

/// Pose normalization for LiDAR object crops: subtract the box center,
/// rotate by `-yaw` about +z, divide by the box length, then permute
/// `(x, y, z) -> (x, z, y)`.
pub fn normalize_kitti(cloud: &PointCloud, bbox: &BBox3D) -> Result<PointCloud> {
    bbox.validate()?;
    let center = Vec3::from(bbox.center);
    let (s, c) = (-bbox.yaw).sin_cos();
    let length = bbox.dims[0];
    let points = cloud
        .points()
        .iter()
        .map(|p| {
            let d = p - center;
            let x = c * d.x - s * d.y;
            let y = s * d.x + c * d.y;
            let z = d.z;
            Vec3::new(x / length, z / length, y / length)
        })
        .collect();
    cloud.with_points(points)
}
