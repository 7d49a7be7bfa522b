//! Finite-difference verification of every hand-written backward pass.
//!
//! Each suite draws small random instances, contracts the forward output
//! with a random upstream tensor to get a scalar loss, and compares every
//! analytic partial against a central difference. Instances whose
//! perturbations would cross a non-differentiable boundary (kernel window
//! edge, nearest-neighbor switch, max-pool winner, ReLU kink) are redrawn
//! rather than counted, since the analytic gradient is a one-sided
//! subgradient there.

// coordinates are addressed as (point, axis) pairs to build perturbations
#![allow(clippy::needless_range_loop)]

use nalgebra::{DMatrix, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::geometry::{knn, CameraModel, PointCloud, PointFeatures, Vec3};
use crate::metrics::{arc_cd_with, chamfer, nearest_neighbors, ARC_GRAD_CAP};
use crate::nn::{
    cross_attention, cross_attention_backward, edgeconv_backward, edgeconv_forward, AttentionParams, EdgeConvParams,
    TokenMatrix,
};
use crate::projection::{splat_backward_with, splat_forward, FeatureGrid, GridSemantics, SplatConfig};

pub const FD_STEP: f64 = 1e-5;
pub const GRADCHECK_TOLERANCE: f64 = 1e-5;
pub const DEFAULT_INSTANCES: usize = 100;
/// Absolute error that always passes, whatever the magnitudes: central
/// differences at `FD_STEP` carry roundoff of roughly `eps / h ~ 1e-11`
/// times the loss scale, so tiny partials cannot be judged relatively.
pub const ABS_FLOOR: f64 = 1e-9;
const MAX_DRAWS: usize = 1000;

/// `|a - b| / max(|a|, |b|, ABS_FLOOR / GRADCHECK_TOLERANCE)`.
///
/// `rel_err <= GRADCHECK_TOLERANCE` holds exactly when the relative error is
/// within tolerance or the absolute error is within [`ABS_FLOOR`].
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let floor = ABS_FLOOR / GRADCHECK_TOLERANCE;
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Splat,
    Edgeconv,
    Attention,
    Chamfer,
    ArcCd,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::Splat,
        Suite::Edgeconv,
        Suite::Attention,
        Suite::Chamfer,
        Suite::ArcCd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Splat => "splat",
            Suite::Edgeconv => "edgeconv",
            Suite::Attention => "attention",
            Suite::Chamfer => "chamfer",
            Suite::ArcCd => "arc_cd",
        }
    }

    fn instance(self, rng: &mut ChaCha8Rng) -> Result<Option<Vec<(f64, f64)>>> {
        match self {
            Suite::Splat => splat_instance(rng),
            Suite::Edgeconv => edgeconv_instance(rng),
            Suite::Attention => attention_instance(rng).map(Some),
            Suite::Chamfer => chamfer_instance(rng),
            Suite::ArcCd => arc_instance(rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub instances: usize,
    /// Draws discarded for sitting too close to a non-differentiable point.
    pub redrawn: usize,
    /// Scalar partials compared across all instances.
    pub components: usize,
    pub max_rel_err: f64,
    /// Partials whose relative error exceeded the tolerance.
    pub failures: usize,
    pub passed: bool,
}

fn instance_seed(seed: u64, index: usize, draw: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((index as u64) << 20)
        .wrapping_add(draw as u64)
}

/// Runs `instances` accepted instances of one suite. Instances are
/// independent and seeded by index, so the result does not depend on `exec`.
pub fn run_suite(suite: Suite, instances: usize, seed: u64, exec: Exec) -> Result<SuiteResult> {
    let per_instance = exec.map(instances, |i| -> Result<(Vec<(f64, f64)>, usize)> {
        for draw in 0..MAX_DRAWS {
            let mut rng = ChaCha8Rng::seed_from_u64(instance_seed(seed, i, draw));
            if let Some(pairs) = suite.instance(&mut rng)? {
                return Ok((pairs, draw));
            }
        }
        Err(Error::Internal(format!(
            "{} gradcheck: no differentiable instance in {MAX_DRAWS} draws",
            suite.name()
        )))
    });
    let mut result = SuiteResult {
        name: suite.name().to_string(),
        instances,
        redrawn: 0,
        components: 0,
        max_rel_err: 0.0,
        failures: 0,
        passed: true,
    };
    for r in per_instance {
        let (pairs, redrawn) = r?;
        result.redrawn += redrawn;
        for (a, n) in pairs {
            let e = rel_err(a, n);
            result.components += 1;
            result.max_rel_err = result.max_rel_err.max(e);
            if !(e <= GRADCHECK_TOLERANCE) {
                result.failures += 1;
            }
        }
    }
    result.passed = result.failures == 0;
    Ok(result)
}

pub fn run_all(instances: usize, seed: u64, exec: Exec) -> Result<Vec<SuiteResult>> {
    Suite::ALL
        .iter()
        .map(|&s| run_suite(s, instances, seed, exec))
        .collect()
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| uniform(rng, -1.0, 1.0))
}

fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3> {
    (0..n)
        .map(|_| {
            Vec3::new(
                uniform(rng, -1.0, 1.0),
                uniform(rng, -1.0, 1.0),
                uniform(rng, -1.0, 1.0),
            )
        })
        .collect()
}

fn perturbed(points: &[Vec3], i: usize, axis: usize, delta: f64) -> Vec<Vec3> {
    let mut p = points.to_vec();
    p[i][axis] += delta;
    p
}

fn contract(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `sum(g * (plus - minus)) / 2h`, differenced elementwise first so that
/// untouched entries cancel exactly.
fn central(g: &[f64], plus: &[f64], minus: &[f64], h: f64) -> f64 {
    g.iter()
        .zip(plus.iter().zip(minus))
        .map(|(g, (p, m))| g * (p - m))
        .sum::<f64>()
        / (2.0 * h)
}

/// A random camera with a random orientation and a cloud placed inside its
/// frustum at depths 2..4.
fn splat_scene(rng: &mut ChaCha8Rng) -> Result<(CameraModel, Vec<Vec3>)> {
    let (h, w) = (rng.random_range(8..14), rng.random_range(8..14));
    let f = uniform(rng, 6.0, 12.0);
    let axis = Vector3::new(
        uniform(rng, -1.0, 1.0),
        uniform(rng, -1.0, 1.0),
        uniform(rng, -1.0, 1.0),
    );
    let rot = Rotation3::from_scaled_axis(axis);
    let t = Vec3::new(
        uniform(rng, -0.5, 0.5),
        uniform(rng, -0.5, 0.5),
        uniform(rng, -0.5, 0.5),
    );
    let m = rot.matrix();
    let rows = [0, 1, 2].map(|r| [m[(r, 0)], m[(r, 1)], m[(r, 2)]]);
    let cam = CameraModel::new(
        [f, f * uniform(rng, 0.8, 1.2)],
        [
            w as f64 / 2.0 + uniform(rng, -1.0, 1.0),
            h as f64 / 2.0 + uniform(rng, -1.0, 1.0),
        ],
        rows,
        [t.x, t.y, t.z],
        h,
        w,
    )?;
    let n = rng.random_range(1..7);
    let points = (0..n)
        .map(|_| {
            let u = uniform(rng, 0.5, w as f64 - 0.5);
            let v = uniform(rng, 0.5, h as f64 - 0.5);
            let z = uniform(rng, 2.0, 4.0);
            let p_cam = Vec3::new(
                (u - cam.principal[0]) * z / cam.focal[0],
                (v - cam.principal[1]) * z / cam.focal[1],
                z,
            );
            rot.inverse() * (p_cam - t)
        })
        .collect();
    Ok((cam, points))
}

/// Kernel-window cell of a projected point; changes exactly when the set
/// of pixels inside its truncated window changes.
fn window_cell(cam: &CameraModel, p: &Vec3) -> (i64, i64) {
    let proj = cam.project_finite(p);
    ((proj.uv[0] - 0.5).floor() as i64, (proj.uv[1] - 0.5).floor() as i64)
}

fn splat_instance(rng: &mut ChaCha8Rng) -> Result<Option<Vec<(f64, f64)>>> {
    let (cam, points) = splat_scene(rng)?;
    let sigma = uniform(rng, 0.6, 2.0);
    let cfg = SplatConfig {
        sigma,
        radius: (3.0 * sigma).ceil() as usize,
        depth_weighting: rng.random_bool(0.5),
        ..SplatConfig::default()
    };
    let dim = rng.random_range(1..4);
    let n = points.len();
    let feats = PointFeatures::new(dim, (0..n * dim).map(|_| uniform(rng, 0.0, 1.0)).collect())?;
    let cloud = PointCloud::new(points.clone())?;
    let g: Vec<f64> = (0..cam.height * cam.width * dim)
        .map(|_| uniform(rng, -1.0, 1.0))
        .collect();
    let upstream = FeatureGrid::from_data(cam.height, cam.width, dim, g.clone(), GridSemantics::Generic)?;

    let h = FD_STEP;
    for (i, p) in points.iter().enumerate() {
        let home = window_cell(&cam, p);
        for axis in 0..3 {
            for s in [h, -h] {
                if window_cell(&cam, &perturbed(&points, i, axis, s)[i]) != home {
                    return Ok(None);
                }
            }
        }
    }

    let (_, aux) = splat_forward(&cloud, &feats, &cam, &cfg)?;
    let grads = splat_backward_with(&aux, &cloud, &feats, &upstream, Exec::Sequential, true)?;
    let render = |pts: Vec<Vec3>, f: &PointFeatures, c: &SplatConfig| -> Result<Vec<f64>> {
        Ok(splat_forward(&PointCloud::new(pts)?, f, &cam, c)?.0.as_slice().to_vec())
    };

    let mut pairs = Vec::new();
    for i in 0..n {
        for axis in 0..3 {
            let plus = render(perturbed(&points, i, axis, h), &feats, &cfg)?;
            let minus = render(perturbed(&points, i, axis, -h), &feats, &cfg)?;
            pairs.push((grads.d_points[i][axis], central(&g, &plus, &minus, h)));
        }
    }
    for k in 0..n * dim {
        let mut fp = feats.clone();
        let mut fm = feats.clone();
        fp.as_mut_slice()[k] += h;
        fm.as_mut_slice()[k] -= h;
        let plus = render(points.clone(), &fp, &cfg)?;
        let minus = render(points.clone(), &fm, &cfg)?;
        pairs.push((grads.d_features.as_slice()[k], central(&g, &plus, &minus, h)));
    }
    let cp = SplatConfig {
        sigma: sigma + h,
        ..cfg
    };
    let cm = SplatConfig {
        sigma: sigma - h,
        ..cfg
    };
    let plus = render(points.clone(), &feats, &cp)?;
    let minus = render(points.clone(), &feats, &cm)?;
    let d_sigma = grads
        .d_sigma
        .ok_or_else(|| Error::Internal("sigma gradient missing".into()))?;
    pairs.push((d_sigma, central(&g, &plus, &minus, h)));
    Ok(Some(pairs))
}

fn edgeconv_instance(rng: &mut ChaCha8Rng) -> Result<Option<Vec<(f64, f64)>>> {
    let n = rng.random_range(5..10);
    let k = rng.random_range(2..5);
    let channels = rng.random_range(2..6);
    let points = random_points(rng, n);
    let cloud = PointCloud::new(points.clone())?;
    let graph = knn(&cloud, k)?;
    let params = EdgeConvParams::init(channels, rng.random());
    let g = random_matrix(rng, n, channels);

    let (_, cache) = edgeconv_forward(&cloud, &graph, &params)?;
    let (d_points, _) = edgeconv_backward(&cache, &params, &TokenMatrix::new(g.clone())?)?;
    let kinks = |c: &crate::nn::EdgeConvCache| -> (Vec<usize>, Vec<bool>) {
        (
            c.argmax().to_vec(),
            c.mlp_cache().pre_activations().iter().map(|&z| z > 0.0).collect(),
        )
    };
    let base = kinks(&cache);

    let h = FD_STEP;
    let mut pairs = Vec::with_capacity(3 * n);
    for i in 0..n {
        for axis in 0..3 {
            let mut outs = Vec::with_capacity(2);
            for s in [h, -h] {
                let moved = PointCloud::new(perturbed(&points, i, axis, s))?;
                let (out, c) = edgeconv_forward(&moved, &graph, &params)?;
                if kinks(&c) != base {
                    return Ok(None);
                }
                outs.push(out.into_matrix());
            }
            pairs.push((
                d_points[i][axis],
                central(g.as_slice(), outs[0].as_slice(), outs[1].as_slice(), h),
            ));
        }
    }
    Ok(Some(pairs))
}

fn attention_instance(rng: &mut ChaCha8Rng) -> Result<Vec<(f64, f64)>> {
    let n = rng.random_range(2..7);
    let m = rng.random_range(1..7);
    let c = rng.random_range(1..6);
    let cv = rng.random_range(1..5);
    let d = rng.random_range(1..5);
    let f_geo = random_matrix(rng, n, c);
    let visual = random_matrix(rng, m, cv);
    let params = AttentionParams::init(c, cv, d, rng.random());
    let g = random_matrix(rng, n, c);

    let forward = |f: &DMatrix<f64>, v: &DMatrix<f64>, p: &AttentionParams| -> Result<f64> {
        let (out, _) = cross_attention(&TokenMatrix::new(f.clone())?, &TokenMatrix::new(v.clone())?, p)?;
        Ok(contract(g.as_slice(), out.as_matrix().as_slice()))
    };
    let (_, cache) = cross_attention(
        &TokenMatrix::new(f_geo.clone())?,
        &TokenMatrix::new(visual.clone())?,
        &params,
    )?;
    let grads = cross_attention_backward(&cache, &params, &TokenMatrix::new(g.clone())?)?;

    let h = FD_STEP;
    let mut pairs = Vec::new();
    let mut check = |analytic: &DMatrix<f64>, eval: &dyn Fn(usize, f64) -> Result<f64>| -> Result<()> {
        for k in 0..analytic.len() {
            let fd = (eval(k, h)? - eval(k, -h)?) / (2.0 * h);
            pairs.push((analytic.as_slice()[k], fd));
        }
        Ok(())
    };
    let bump = |m: &DMatrix<f64>, k: usize, s: f64| {
        let mut m = m.clone();
        m.as_mut_slice()[k] += s;
        m
    };
    check(&grads.d_geo, &|k, s| forward(&bump(&f_geo, k, s), &visual, &params))?;
    check(&grads.d_visual, &|k, s| forward(&f_geo, &bump(&visual, k, s), &params))?;
    check(&grads.d_wq, &|k, s| {
        forward(
            &f_geo,
            &visual,
            &AttentionParams {
                w_q: bump(&params.w_q, k, s),
                ..params.clone()
            },
        )
    })?;
    check(&grads.d_wk, &|k, s| {
        forward(
            &f_geo,
            &visual,
            &AttentionParams {
                w_k: bump(&params.w_k, k, s),
                ..params.clone()
            },
        )
    })?;
    check(&grads.d_wv, &|k, s| {
        forward(
            &f_geo,
            &visual,
            &AttentionParams {
                w_v: bump(&params.w_v, k, s),
                ..params.clone()
            },
        )
    })?;
    Ok(pairs)
}

fn matching(x: &[Vec3], y: &[Vec3]) -> (Vec<usize>, Vec<usize>) {
    let f = nearest_neighbors(x, y, Exec::Sequential).iter().map(|m| m.1).collect();
    let b = nearest_neighbors(y, x, Exec::Sequential).iter().map(|m| m.1).collect();
    (f, b)
}

/// Central differences of `loss` in every coordinate of `x`, or `None` if a
/// step changes the nearest-neighbor assignment.
fn chamfer_fd(
    x: &[Vec3],
    y: &PointCloud,
    analytic: &[Vec3],
    loss: &dyn Fn(&PointCloud) -> Result<f64>,
) -> Result<Option<Vec<(f64, f64)>>> {
    let base = matching(x, y.points());
    let h = FD_STEP;
    let mut pairs = Vec::with_capacity(3 * x.len());
    for i in 0..x.len() {
        for axis in 0..3 {
            let mut vals = [0.0; 2];
            for (slot, s) in [h, -h].into_iter().enumerate() {
                let moved = perturbed(x, i, axis, s);
                if matching(&moved, y.points()) != base {
                    return Ok(None);
                }
                vals[slot] = loss(&PointCloud::new(moved)?)?;
            }
            pairs.push((analytic[i][axis], (vals[0] - vals[1]) / (2.0 * h)));
        }
    }
    Ok(Some(pairs))
}

fn chamfer_pair(rng: &mut ChaCha8Rng) -> Result<(Vec<Vec3>, PointCloud)> {
    let nx = rng.random_range(1..9);
    let ny = rng.random_range(1..9);
    let x = random_points(rng, nx);
    let y = PointCloud::new(random_points(rng, ny))?;
    Ok((x, y))
}

fn chamfer_instance(rng: &mut ChaCha8Rng) -> Result<Option<Vec<(f64, f64)>>> {
    let (x, y) = chamfer_pair(rng)?;
    let lv = chamfer(&PointCloud::new(x.clone())?, &y, true);
    let d_x = lv
        .d_x
        .ok_or_else(|| Error::Internal("chamfer gradient missing".into()))?;
    chamfer_fd(&x, &y, &d_x, &|c| Ok(chamfer(c, &y, false).value))
}

fn arc_instance(rng: &mut ChaCha8Rng) -> Result<Option<Vec<(f64, f64)>>> {
    let (x, y) = chamfer_pair(rng)?;
    let lambda = uniform(rng, 0.1, 2.0);
    let lv = arc_cd_with(&PointCloud::new(x.clone())?, &y, lambda, ARC_GRAD_CAP)?;
    // near c = 0 the slope is capped on purpose; that regime is not a smooth
    // derivative and is covered by unit tests instead
    let c = (lv.value / lambda).cosh() - 1.0;
    if lv.grad_capped || c < 1e-3 {
        return Ok(None);
    }
    let d_x = lv
        .d_x
        .ok_or_else(|| Error::Internal("arc-CD gradient missing".into()))?;
    chamfer_fd(&x, &y, &d_x, &|cl| Ok(arc_cd_with(cl, &y, lambda, ARC_GRAD_CAP)?.value))
}
