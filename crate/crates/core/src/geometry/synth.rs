use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{PointCloud, Vec3};
use crate::error::{Error, Result};

/// `n` points drawn uniformly on the unit sphere.
pub fn gen_sphere(n: usize, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    while points.len() < n {
        let v = Vec3::new(
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        let norm = v.norm();
        if norm > 1e-12 {
            points.push(v / norm);
        }
    }
    PointCloud::new(points)
}

/// Ray-like scan of a rounded object, see [`gen_lidar_labeled`].
pub fn gen_lidar(n: usize, rays: usize, seed: u64) -> Result<PointCloud> {
    gen_lidar_labeled(n, rays, seed).map(|(c, _)| c)
}

/// Elevation band spanned by the scan lines, radians.
const ELEVATION_SPAN: (f64, f64) = (-0.25, 0.25);
const AZIMUTH_SPAN: (f64, f64) = (-0.7, 0.7);
const ELEVATION_JITTER: f64 = 2e-3;

/// Simulates a spinning sensor at the origin looking along +x with `rays`
/// fixed-elevation scan lines. Points are distributed round-robin over the
/// lines; each hits a wavy surface about 3 units away at a random azimuth.
/// Returns the cloud and the scan-line id of every point.
pub fn gen_lidar_labeled(n: usize, rays: usize, seed: u64) -> Result<(PointCloud, Vec<usize>)> {
    if n == 0 || rays == 0 {
        return Err(Error::invalid("n and rays must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let elevation = |r: usize| {
        if rays == 1 {
            0.0
        } else {
            ELEVATION_SPAN.0 + (ELEVATION_SPAN.1 - ELEVATION_SPAN.0) * r as f64 / (rays - 1) as f64
        }
    };
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let ray = i % rays;
        let theta: f64 = rng.random_range(AZIMUTH_SPAN.0..AZIMUTH_SPAN.1);
        let phi = elevation(ray) + ELEVATION_JITTER * (rng.random::<f64>() - 0.5);
        let range = 3.0 + 0.35 * (3.0 * theta).cos() - 0.2 * phi + 0.01 * rng.random::<f64>();
        points.push(Vec3::new(
            range * phi.cos() * theta.cos(),
            range * phi.cos() * theta.sin(),
            range * phi.sin(),
        ));
        labels.push(ray);
    }
    Ok((PointCloud::new(points)?, labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_points_have_unit_norm() {
        let c = gen_sphere(1000, 7).unwrap();
        assert_eq!(c.len(), 1000);
        assert!(c.points().iter().all(|p| (p.norm() - 1.0).abs() <= 1e-9));
    }

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(gen_sphere(257, 99).unwrap(), gen_sphere(257, 99).unwrap());
        assert_eq!(gen_lidar(1000, 8, 3).unwrap(), gen_lidar(1000, 8, 3).unwrap());
        assert_ne!(gen_sphere(16, 1).unwrap(), gen_sphere(16, 2).unwrap());
    }

    #[test]
    fn lidar_rays_are_tight_in_elevation() {
        let (c, labels) = gen_lidar_labeled(1000, 8, 17).unwrap();
        let elev: Vec<f64> = c
            .points()
            .iter()
            .map(|p| p.z.atan2((p.x * p.x + p.y * p.y).sqrt()))
            .collect();

        let mut groups = vec![Vec::new(); 8];
        for (e, &l) in elev.iter().zip(&labels) {
            groups[l].push(*e);
        }
        assert!(groups.iter().all(|g| !g.is_empty()));
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let var = |v: &[f64]| {
            let m = mean(v);
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
        };
        let within = groups.iter().map(|g| var(g)).sum::<f64>() / 8.0;
        let means: Vec<f64> = groups.iter().map(|g| mean(g)).collect();
        let across = var(&means);
        assert!(within < across, "within {within} across {across}");
        assert!(within * 100.0 < across);
    }

    #[test]
    fn rejects_zero_sizes() {
        assert!(gen_sphere(0, 1).is_err());
        assert!(gen_lidar(10, 0, 1).is_err());
    }
}
