use serde::{Deserialize, Serialize};

use super::{FeatureGrid, GridSemantics};
use crate::error::{Error, Result};
use crate::geometry::{CameraModel, PointCloud, Projection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HardMode {
    Depth,
    Ccm,
}

/// Output of [`rasterize_hard`].
#[derive(Debug, Clone, PartialEq)]
pub struct HardRaster {
    pub grid: FeatureGrid,
    /// Number of visible points binned into each pixel (weight-sum semantics).
    pub hits: FeatureGrid,
    /// Set when no point landed on the grid.
    pub empty: bool,
}

/// Pixel `(row, col)` holding the projection, if it falls inside the grid.
pub(crate) fn hard_pixel(proj: &Projection, height: usize, width: usize) -> Option<(usize, usize)> {
    if proj.culled {
        return None;
    }
    let [u, v] = proj.uv;
    if u >= 0.0 && v >= 0.0 && u < width as f64 && v < height as f64 {
        Some((v.floor() as usize, u.floor() as usize))
    } else {
        None
    }
}

/// Dirac-style projection: every visible point writes into the single pixel
/// containing its projection, nearest depth wins (lower index on equal depth).
///
/// Depth mode stores camera depth; CCM mode stores the point's CCM feature
/// (attached 3-channel features, else coordinate colors).
pub fn rasterize_hard(cloud: &PointCloud, cam: &CameraModel, mode: HardMode) -> Result<HardRaster> {
    cam.validate()?;
    let (h, w) = (cam.height, cam.width);
    let (channels, semantics) = match mode {
        HardMode::Depth => (1, GridSemantics::Depth),
        HardMode::Ccm => (3, GridSemantics::Ccm),
    };
    let colors = match mode {
        HardMode::Ccm => {
            let f = cloud.ccm_features();
            if f.as_slice().iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::invalid("ccm features must lie in [0, 1]"));
            }
            Some(f)
        }
        HardMode::Depth => None,
    };

    let mut grid = FeatureGrid::zeros(h, w, channels, semantics);
    let mut hits = FeatureGrid::zeros(h, w, 1, GridSemantics::Weightsum);
    let mut zbuf = vec![f64::INFINITY; h * w];
    for (k, p) in cloud.points().iter().enumerate() {
        let proj = cam.project_finite(p);
        let Some((row, col)) = hard_pixel(&proj, h, w) else {
            continue;
        };
        let idx = row * w + col;
        hits.as_mut_slice()[idx] += 1.0;
        if proj.depth < zbuf[idx] {
            zbuf[idx] = proj.depth;
            match &colors {
                Some(c) => grid.pixel_mut(idx).copy_from_slice(c.row(k)),
                None => grid.pixel_mut(idx)[0] = proj.depth,
            }
        }
    }
    let empty = zbuf.iter().all(|z| z.is_infinite());
    Ok(HardRaster { grid, hits, empty })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{PointFeatures, Vec3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn camera(h: usize, w: usize) -> CameraModel {
        CameraModel::new(
            [1.0, 1.0],
            [0.0, 0.0],
            [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            [0.0; 3],
            h,
            w,
        )
        .unwrap()
    }

    #[test]
    fn single_write() {
        // u = 3.5, v = 4.5 at z = 2 -> column 3, row 4
        let c = PointCloud::from_arrays(&[[7.0, 9.0, 2.0]]).unwrap();
        let r = rasterize_hard(&c, &camera(8, 8), HardMode::Depth).unwrap();
        for row in 0..8 {
            for col in 0..8 {
                let want = if (row, col) == (4, 3) { 2.0 } else { 0.0 };
                assert_eq!(r.grid.get(row, col, 0), want);
            }
        }
        assert!(!r.empty);
    }

    #[test]
    fn nearer_point_wins() {
        let c = PointCloud::from_arrays(&[[2.2, 2.2, 2.0], [1.1, 1.1, 1.0]]).unwrap();
        let r = rasterize_hard(&c, &camera(4, 4), HardMode::Depth).unwrap();
        assert_eq!(r.grid.get(1, 1, 0), 1.0);
        assert_eq!(r.hits.get(1, 1, 0), 2.0);
    }

    #[test]
    fn all_culled_flags_empty() {
        let c = PointCloud::from_arrays(&[[0.0, 0.0, -1.0], [100.0, 0.0, 1.0]]).unwrap();
        let r = rasterize_hard(&c, &camera(4, 4), HardMode::Ccm).unwrap();
        assert!(r.empty);
        assert!(r.grid.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ccm_matches_argmin_depth_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cam = CameraModel::looking_at_origin(16, 20, 3.0).unwrap();
        for _ in 0..20 {
            let n = rng.random_range(1..150);
            let pts: Vec<Vec3> = (0..n)
                .map(|_| {
                    Vec3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    )
                })
                .collect();
            let cloud = PointCloud::new(pts.clone()).unwrap();
            let r = rasterize_hard(&cloud, &cam, HardMode::Ccm).unwrap();
            // oracle: for every pixel scan every point
            for row in 0..16 {
                for col in 0..20 {
                    let mut best: Option<(f64, usize)> = None;
                    for (k, p) in pts.iter().enumerate() {
                        let z = p.z + 3.0;
                        let u = cam.focal[0] * p.x / z + cam.principal[0];
                        let v = cam.focal[1] * p.y / z + cam.principal[1];
                        if u.floor() == col as f64 && v.floor() == row as f64 && best.is_none_or(|(bz, _)| z < bz) {
                            best = Some((z, k));
                        }
                    }
                    let want: [f64; 3] = match best {
                        Some((_, k)) => {
                            let p = pts[k];
                            [(p.x + 1.0) / 2.0, (p.y + 1.0) / 2.0, (p.z + 1.0) / 2.0]
                        }
                        None => [0.0; 3],
                    };
                    for (ch, w) in want.iter().enumerate() {
                        assert_eq!(r.grid.get(row, col, ch), *w);
                    }
                }
            }
        }
    }

    #[test]
    fn attached_features_are_used_and_checked() {
        let c = PointCloud::from_arrays(&[[0.5, 0.5, 1.0]]).unwrap();
        let ok = c
            .clone()
            .with_features(PointFeatures::from_rows(&[[0.1, 0.2, 0.3]]).unwrap())
            .unwrap();
        let r = rasterize_hard(&ok, &camera(2, 2), HardMode::Ccm).unwrap();
        assert_eq!(r.grid.pixel(0), &[0.1, 0.2, 0.3]);
        let bad = c
            .with_features(PointFeatures::from_rows(&[[0.1, 2.0, 0.3]]).unwrap())
            .unwrap();
        assert!(rasterize_hard(&bad, &camera(2, 2), HardMode::Ccm).is_err());
    }
}
