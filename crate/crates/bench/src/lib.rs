//! Shared fixtures for the criterion benchmarks in `benches/`.

use softsplat_core::geometry::{gen_sphere, normalize_unit};
use softsplat_core::{CameraModel, PointCloud};

/// A unit-normalized sphere sample and a square camera looking at it.
pub fn sphere_scene(n: usize, resolution: usize) -> (PointCloud, CameraModel) {
    let cloud = normalize_unit(&gen_sphere(n, 42).expect("n > 0"));
    let cam = CameraModel::looking_at_origin(resolution, resolution, 3.0).expect("valid camera");
    (cloud, cam)
}
