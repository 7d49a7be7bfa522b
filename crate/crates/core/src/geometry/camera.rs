use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::Vec3;
use crate::error::{Error, Result};

/// Camera-frame depths at or below this are culled.
pub const CULL_DEPTH: f64 = 1e-9;

/// Pinhole camera: `p_cam = R p + t`, `u = f_x x/z + c_x`, `v = f_y y/z + c_y`.
///
/// `u` runs along image columns and `v` along rows; pixel `(row, col)` has its
/// center at `(col + 0.5, row + 0.5)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraModel {
    pub focal: [f64; 2],
    pub principal: [f64; 2],
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Image-plane coordinates `(u, v)` in pixels. Zero when culled.
    pub uv: [f64; 2],
    /// Camera-frame depth.
    pub depth: f64,
    /// Camera-frame position.
    pub cam: Vec3,
    pub culled: bool,
}

/// 64x64 view of the unit ball from 3 units away.
impl Default for CameraModel {
    fn default() -> Self {
        CameraModel::looking_at_origin(64, 64, 3.0).expect("default camera is valid")
    }
}

impl CameraModel {
    pub fn new(
        focal: [f64; 2],
        principal: [f64; 2],
        rotation: [[f64; 3]; 3],
        translation: [f64; 3],
        height: usize,
        width: usize,
    ) -> Result<Self> {
        let cam = Self {
            focal,
            principal,
            rotation,
            translation,
            height,
            width,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Identity rotation, camera placed `distance` units behind the origin on
    /// the optical axis, principal point at the image center and a focal
    /// length that maps the unit ball onto the central ~60% of the frame.
    pub fn looking_at_origin(height: usize, width: usize, distance: f64) -> Result<Self> {
        let f = 0.625 * width.min(height) as f64;
        Self::new(
            [f, f],
            [width as f64 / 2.0, height as f64 / 2.0],
            [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            [0.0, 0.0, distance],
            height,
            width,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal[0] > 0.0 && self.focal[1] > 0.0) || !self.focal.iter().all(|f| f.is_finite()) {
            return Err(Error::invalid("focal lengths must be finite and positive"));
        }
        if self.height == 0 || self.width == 0 {
            return Err(Error::invalid("camera resolution must be at least 1x1"));
        }
        let finite = self.principal.iter().all(|v| v.is_finite())
            && self.translation.iter().all(|v| v.is_finite())
            && self.rotation.iter().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("camera parameters must be finite"));
        }
        let r = self.rotation_matrix();
        let err = (r.transpose() * r - Matrix3::identity()).abs().max();
        if err > 1e-9 {
            return Err(Error::invalid(format!(
                "rotation is not orthonormal (|R^T R - I|_max = {err:e})"
            )));
        }
        Ok(())
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        let r = &self.rotation;
        Matrix3::new(
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
        )
    }

    pub fn translation_vector(&self) -> Vec3 {
        Vec3::from(self.translation)
    }

    /// Returns a copy with the principal point shifted by `(du, dv)` pixels.
    pub fn shifted(&self, du: f64, dv: f64) -> Self {
        let mut out = self.clone();
        out.principal[0] += du;
        out.principal[1] += dv;
        out
    }

    pub fn project(&self, p: &Vec3) -> Result<Projection> {
        if !p.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("cannot project a non-finite point"));
        }
        Ok(self.project_finite(p))
    }

    /// Projection for a point already known to be finite.
    pub(crate) fn project_finite(&self, p: &Vec3) -> Projection {
        let cam = self.rotation_matrix() * p + self.translation_vector();
        let depth = cam.z;
        if depth <= CULL_DEPTH {
            return Projection {
                uv: [0.0, 0.0],
                depth,
                cam,
                culled: true,
            };
        }
        Projection {
            uv: [
                self.focal[0] * cam.x / depth + self.principal[0],
                self.focal[1] * cam.y / depth + self.principal[1],
            ],
            depth,
            cam,
            culled: false,
        }
    }

    /// Pulls a gradient on `(u, v, z)` back to world coordinates of the point.
    pub fn pullback(&self, proj: &Projection, d_u: f64, d_v: f64, d_z: f64) -> Vec3 {
        if proj.culled {
            return Vec3::zeros();
        }
        let z = proj.depth;
        let [fx, fy] = self.focal;
        let d_cam = Vec3::new(
            d_u * fx / z,
            d_v * fy / z,
            d_z - d_u * fx * proj.cam.x / (z * z) - d_v * fy * proj.cam.y / (z * z),
        );
        self.rotation_matrix().transpose() * d_cam
    }
}
