use super::hard::hard_pixel;
use super::{pixel_center, FeatureGrid, GridSemantics, ProjectionKind, SplatConfig};
use crate::error::Result;
use crate::exec::Exec;
use crate::geometry::{CameraModel, PointCloud, Projection};

fn visible(cloud: &PointCloud, cam: &CameraModel) -> Vec<Projection> {
    cloud
        .points()
        .iter()
        .map(|p| cam.project_finite(p))
        .filter(|p| !p.culled)
        .collect()
}

fn alpha(cfg: &SplatConfig, p: &Projection) -> f64 {
    if cfg.depth_weighting {
        1.0 / (p.depth + cfg.eps_depth)
    } else {
        1.0
    }
}

fn mixture(cfg: &SplatConfig, projs: &[Projection], q: [f64; 2]) -> f64 {
    let two_s2 = 2.0 * cfg.sigma * cfg.sigma;
    projs
        .iter()
        .map(|p| {
            let du = p.uv[0] - q[0];
            let dv = p.uv[1] - q[1];
            alpha(cfg, p) * (-(du * du + dv * dv) / two_s2).exp()
        })
        .sum()
}

pub fn soft_density_field(cloud: &PointCloud, cam: &CameraModel, cfg: &SplatConfig) -> Result<FeatureGrid> {
    soft_density_field_with(cloud, cam, cfg, Exec::Parallel)
}

/// Depth-weighted Gaussian mixture over the image plane, evaluated at pixel
/// centers and normalized so its Riemann sum (unit pixel area) is 1.
///
/// The kernel is not truncated here. If every point is culled, or the
/// mixture underflows everywhere, the field is identically zero.
pub fn soft_density_field_with(
    cloud: &PointCloud,
    cam: &CameraModel,
    cfg: &SplatConfig,
    exec: Exec,
) -> Result<FeatureGrid> {
    cfg.validate()?;
    cam.validate()?;
    let projs = visible(cloud, cam);
    let (h, w) = (cam.height, cam.width);
    let mut raw = exec.map(h * w, |pix| mixture(cfg, &projs, pixel_center(pix / w, pix % w)));
    let z: f64 = raw.iter().sum();
    if z > 0.0 {
        raw.iter_mut().for_each(|v| *v /= z);
    }
    FeatureGrid::from_data(h, w, 1, raw, GridSemantics::Generic)
}

/// Normalized soft density at an arbitrary image-plane location `q = (u, v)`,
/// using the same normalizer as [`soft_density_field`].
pub fn soft_density(cloud: &PointCloud, cam: &CameraModel, cfg: &SplatConfig, q: [f64; 2]) -> Result<f64> {
    cfg.validate()?;
    cam.validate()?;
    let projs = visible(cloud, cam);
    let w = cam.width;
    let z: f64 = (0..cam.height * w)
        .map(|pix| mixture(cfg, &projs, pixel_center(pix / w, pix % w)))
        .sum();
    if z > 0.0 {
        Ok(mixture(cfg, &projs, q) / z)
    } else {
        Ok(0.0)
    }
}

/// Area (in pixels) of the image region carrying projected information.
///
/// Hard: number of distinct occupied pixels. Soft: pixels whose center lies
/// within `3 sigma` of a visible projection, together with each projection's
/// own pixel, so the soft support always contains the hard one.
pub fn support_measure(cloud: &PointCloud, cam: &CameraModel, cfg: &SplatConfig, mode: ProjectionKind) -> Result<f64> {
    cfg.validate()?;
    cam.validate()?;
    let (h, w) = (cam.height, cam.width);
    let projs = visible(cloud, cam);
    let mut mask = vec![false; h * w];
    for p in &projs {
        if let Some((row, col)) = hard_pixel(p, h, w) {
            mask[row * w + col] = true;
        }
    }
    if mode == ProjectionKind::Soft {
        let reach = 3.0 * cfg.sigma;
        let reach2 = reach * reach;
        for p in &projs {
            let [u, v] = p.uv;
            let c0 = (u - reach - 0.5).floor().max(0.0);
            let c1 = (u + reach - 0.5).ceil().min(w as f64 - 1.0);
            let r0 = (v - reach - 0.5).floor().max(0.0);
            let r1 = (v + reach - 0.5).ceil().min(h as f64 - 1.0);
            if c0 > c1 || r0 > r1 {
                continue;
            }
            for row in r0 as usize..=r1 as usize {
                for col in c0 as usize..=c1 as usize {
                    let q = pixel_center(row, col);
                    let (du, dv) = (u - q[0], v - q[1]);
                    if du * du + dv * dv <= reach2 {
                        mask[row * w + col] = true;
                    }
                }
            }
        }
    }
    Ok(mask.iter().filter(|&&m| m).count() as f64)
}
