use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{CameraModel, PointCloud, Projection, Vec3};
use crate::gradcheck::rel_err;
use crate::io::Provenance;
use crate::projection::{
    rasterize_hard, splat_backward, splat_forward, FeatureGrid, GridSemantics, HardMode, ProjectionKind, SplatConfig,
};

/// Analytic vs. finite-difference agreement required in soft mode.
pub const PROBE_TOLERANCE: f64 = 1e-5;
/// Finite-difference step, in pixels of image-plane motion.
pub const PROBE_STEP_PX: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub count: usize,
    pub min: f64,
    pub median: f64,
    pub mean: f64,
    pub max: f64,
}

impl NormStats {
    fn from_values(mut v: Vec<f64>) -> Self {
        if v.is_empty() {
            return Self {
                count: 0,
                min: 0.0,
                median: 0.0,
                mean: 0.0,
                max: 0.0,
            };
        }
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        };
        Self {
            count: n,
            min: v[0],
            median,
            mean: v.iter().sum::<f64>() / n as f64,
            max: v[n - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub mode: ProjectionKind,
    pub points: usize,
    pub visible_points: usize,
    pub sigma: f64,
    pub fd_step_pixels: f64,
    pub loss: f64,
    /// Coordinates whose central difference was evaluated.
    pub sampled_coordinates: usize,
    /// Coordinates skipped because the step would cross a pixel (hard) or
    /// kernel-window (soft) boundary.
    pub excluded_coordinates: usize,
    /// Fraction of sampled coordinates with an exactly zero difference quotient.
    pub zero_fd_fraction: f64,
    /// Soft mode only.
    pub analytic_max_rel_err: Option<f64>,
    pub analytic_matches_fd: Option<bool>,
    /// Per-point `|dL/dp|`: analytic in soft mode, finite-difference in hard mode.
    pub grad_norm: NormStats,
    /// Among visible points within 3 sigma of some pixel center, the fraction
    /// with a nonzero gradient.
    pub nonzero_grad_fraction: f64,
    pub provenance: Provenance,
}

fn masked_mean(grid: &FeatureGrid, mask: &[f64]) -> f64 {
    let c = grid.channels();
    let s: f64 = (0..grid.pixel_count())
        .map(|p| mask[p] * grid.pixel(p).iter().sum::<f64>())
        .sum();
    s / (grid.pixel_count() * c) as f64
}

/// Central difference of the masked mean, accumulated per pixel so that
/// untouched pixels cancel exactly.
fn masked_difference(plus: &FeatureGrid, minus: &FeatureGrid, mask: &[f64], step: f64) -> f64 {
    let c = plus.channels();
    let s: f64 = (0..plus.pixel_count())
        .map(|p| {
            let d: f64 = plus.pixel(p).iter().zip(minus.pixel(p)).map(|(a, b)| a - b).sum();
            mask[p] * d
        })
        .sum();
    s / ((plus.pixel_count() * c) as f64 * 2.0 * step)
}

/// Cell index of an image coordinate for boundary-crossing checks: pixel
/// cells for hard rasterization, kernel-window cells (offset by half a
/// pixel) for splatting.
fn cell(mode: ProjectionKind, p: &Projection) -> Option<(i64, i64)> {
    if p.culled {
        return None;
    }
    let off = match mode {
        ProjectionKind::Hard => 0.0,
        ProjectionKind::Soft => 0.5,
    };
    Some(((p.uv[0] - off).floor() as i64, (p.uv[1] - off).floor() as i64))
}

fn within_reach(p: &Projection, cam: &CameraModel, reach: f64) -> bool {
    if p.culled {
        return false;
    }
    let cu = (p.uv[0] - 0.5).round().clamp(0.0, cam.width as f64 - 1.0) + 0.5;
    let cv = (p.uv[1] - 0.5).round().clamp(0.0, cam.height as f64 - 1.0) + 0.5;
    let (du, dv) = (p.uv[0] - cu, p.uv[1] - cv);
    du * du + dv * dv <= reach * reach
}

/// Measures gradient flow from a masked-mean loss on the projected CCM grid
/// back to point coordinates.
///
/// CCM colors are computed once and held fixed, so the only dependence on
/// coordinates is through the projection. Each coordinate is stepped by the
/// world-space distance that moves its projection by about
/// [`PROBE_STEP_PX`] pixels.
pub fn grad_flow_probe(
    cloud: &PointCloud,
    cam: &CameraModel,
    cfg: &SplatConfig,
    mode: ProjectionKind,
    seed: u64,
) -> Result<ProbeReport> {
    cam.validate()?;
    cfg.validate()?;
    let feats = cloud.ccm_features();
    let cloud = cloud.clone().with_features(feats.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mask: Vec<f64> = (0..cam.height * cam.width)
        .map(|_| 0.05 + 0.95 * rng.random::<f64>())
        .collect();
    let channels = feats.dim();

    let render = |c: &PointCloud| -> Result<FeatureGrid> {
        match mode {
            ProjectionKind::Hard => Ok(rasterize_hard(c, cam, HardMode::Ccm)?.grid),
            ProjectionKind::Soft => Ok(splat_forward(c, &feats, cam, cfg)?.0),
        }
    };

    let base = render(&cloud)?;
    let loss = masked_mean(&base, &mask);
    let projections: Vec<Projection> = cloud.points().iter().map(|p| cam.project(p)).collect::<Result<_>>()?;

    let analytic: Option<Vec<Vec3>> = match mode {
        ProjectionKind::Soft => {
            let (_, aux) = splat_forward(&cloud, &feats, cam, cfg)?;
            let scale = 1.0 / (cam.height * cam.width * channels) as f64;
            let up: Vec<f64> = mask
                .iter()
                .flat_map(|m| std::iter::repeat_n(m * scale, channels))
                .collect();
            let up = FeatureGrid::from_data(cam.height, cam.width, channels, up, GridSemantics::Generic)?;
            Some(splat_backward(&aux, &cloud, &feats, &up)?.d_points)
        }
        ProjectionKind::Hard => None,
    };

    let focal = cam.focal[0].max(cam.focal[1]);
    let mut sampled = 0usize;
    let mut excluded = 0usize;
    let mut zero = 0usize;
    let mut max_err: f64 = 0.0;
    let mut fd_grads = vec![Vec3::zeros(); cloud.len()];
    for (i, proj) in projections.iter().enumerate() {
        let Some(home) = cell(mode, proj) else {
            continue;
        };
        let h = PROBE_STEP_PX * proj.depth / focal;
        for axis in 0..3 {
            let mut plus = cloud.points().to_vec();
            let mut minus = plus.clone();
            plus[i][axis] += h;
            minus[i][axis] -= h;
            let crosses = [&plus, &minus]
                .iter()
                .any(|pts| cell(mode, &cam.project_finite(&pts[i])) != Some(home));
            if crosses {
                excluded += 1;
                continue;
            }
            sampled += 1;
            let gp = render(&cloud.with_points(plus)?)?;
            let gm = render(&cloud.with_points(minus)?)?;
            let fd = if gp == gm {
                0.0
            } else {
                masked_difference(&gp, &gm, &mask, h)
            };
            if fd == 0.0 {
                zero += 1;
            }
            fd_grads[i][axis] = fd;
            if let Some(a) = &analytic {
                max_err = max_err.max(rel_err(a[i][axis], fd));
            }
        }
    }

    let visible: Vec<usize> = (0..cloud.len()).filter(|&i| !projections[i].culled).collect();
    let grads = analytic.as_ref().unwrap_or(&fd_grads);
    let norms: Vec<f64> = visible.iter().map(|&i| grads[i].norm()).collect();
    let reach = 3.0 * cfg.sigma;
    let near: Vec<usize> = visible
        .iter()
        .copied()
        .filter(|&i| within_reach(&projections[i], cam, reach))
        .collect();
    let nonzero = near.iter().filter(|&&i| grads[i].norm() > 0.0).count();

    Ok(ProbeReport {
        mode,
        points: cloud.len(),
        visible_points: visible.len(),
        sigma: cfg.sigma,
        fd_step_pixels: PROBE_STEP_PX,
        loss,
        sampled_coordinates: sampled,
        excluded_coordinates: excluded,
        zero_fd_fraction: if sampled > 0 { zero as f64 / sampled as f64 } else { 0.0 },
        analytic_max_rel_err: analytic.as_ref().map(|_| max_err),
        analytic_matches_fd: analytic.as_ref().map(|_| max_err <= PROBE_TOLERANCE),
        grad_norm: NormStats::from_values(norms),
        nonzero_grad_fraction: if near.is_empty() {
            0.0
        } else {
            nonzero as f64 / near.len() as f64
        },
        provenance: Provenance::default().with_seed("probe", seed).with_config(cfg)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{gen_sphere, normalize_unit};

    fn setup(n: usize) -> (PointCloud, CameraModel) {
        let cloud = normalize_unit(&gen_sphere(n, 3).unwrap());
        (cloud, CameraModel::looking_at_origin(32, 32, 3.0).unwrap())
    }

    #[test]
    fn hard_mode_gradients_vanish() {
        let (cloud, cam) = setup(64);
        let r = grad_flow_probe(&cloud, &cam, &SplatConfig::default(), ProjectionKind::Hard, 1).unwrap();
        assert!(r.sampled_coordinates > 150);
        assert_eq!(r.zero_fd_fraction, 1.0);
        assert_eq!(r.grad_norm.max, 0.0);
        assert_eq!(r.analytic_matches_fd, None);
    }

    #[test]
    fn soft_mode_gradients_flow() {
        let (cloud, cam) = setup(64);
        let r = grad_flow_probe(&cloud, &cam, &SplatConfig::default(), ProjectionKind::Soft, 1).unwrap();
        assert!(r.grad_norm.median > 0.0);
        assert_eq!(r.analytic_matches_fd, Some(true), "{:?}", r.analytic_max_rel_err);
        assert_eq!(r.nonzero_grad_fraction, 1.0);
    }

    #[test]
    fn norm_stats() {
        let s = NormStats::from_values(vec![3.0, 1.0, 2.0, 10.0]);
        assert_eq!((s.min, s.median, s.mean, s.max), (1.0, 2.5, 4.0, 10.0));
        assert_eq!(NormStats::from_values(vec![]).count, 0);
    }
}
