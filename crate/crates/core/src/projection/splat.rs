use super::{pixel_center, FeatureGrid, GridSemantics, SplatConfig};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::geometry::{CameraModel, PointCloud, PointFeatures, Projection, Vec3};

/// Forward-pass intermediates needed by [`splat_backward`].
///
/// Contributors are stored per pixel in ascending point order (CSR layout),
/// with a transposed index listing each point's entries in ascending pixel
/// order.
#[derive(Debug, Clone)]
pub struct SplatAux {
    cfg: SplatConfig,
    camera: CameraModel,
    projections: Vec<Projection>,
    feature_dim: usize,
    pixel_offsets: Vec<usize>,
    entry_point: Vec<usize>,
    entry_weight: Vec<f64>,
    weight_sums: Vec<f64>,
    values: Vec<f64>,
    point_offsets: Vec<usize>,
    point_entries: Vec<usize>,
}

impl SplatAux {
    pub fn config(&self) -> &SplatConfig {
        &self.cfg
    }

    pub fn camera(&self) -> &CameraModel {
        &self.camera
    }

    pub fn projections(&self) -> &[Projection] {
        &self.projections
    }

    pub fn point_count(&self) -> usize {
        self.projections.len()
    }

    /// `(point index, weight)` pairs contributing to pixel `row * width + col`.
    pub fn contributors(&self, pixel: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.pixel_offsets[pixel]..self.pixel_offsets[pixel + 1];
        self.entry_point[range.clone()]
            .iter()
            .copied()
            .zip(self.entry_weight[range].iter().copied())
    }

    pub fn weight_sums(&self) -> &[f64] {
        &self.weight_sums
    }

    /// Accumulated kernel weight per pixel as a weight-sum grid.
    pub fn weight_grid(&self) -> FeatureGrid {
        FeatureGrid::from_data(
            self.camera.height,
            self.camera.width,
            1,
            self.weight_sums.clone(),
            GridSemantics::Weightsum,
        )
        .expect("weights are finite and non-negative")
    }
}

/// Gradients of a scalar loss with respect to splatting inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub d_points: Vec<Vec3>,
    pub d_features: PointFeatures,
    pub d_sigma: Option<f64>,
}

/// Per pixel: `(point, weight)` contributors in point order, weight sum, values.
type PixelAccum = (Vec<(usize, f64)>, f64, Vec<f64>);

#[inline]
fn weight(cfg: &SplatConfig, uv: [f64; 2], depth: f64, q: [f64; 2]) -> f64 {
    let du = uv[0] - q[0];
    let dv = uv[1] - q[1];
    let g = (-(du * du + dv * dv) / (2.0 * cfg.sigma * cfg.sigma)).exp();
    if cfg.depth_weighting {
        g / (depth + cfg.eps_depth)
    } else {
        g
    }
}

pub fn splat_forward(
    cloud: &PointCloud,
    feats: &PointFeatures,
    cam: &CameraModel,
    cfg: &SplatConfig,
) -> Result<(FeatureGrid, SplatAux)> {
    splat_forward_with(cloud, feats, cam, cfg, Exec::Parallel)
}

/// Splats the CCM features of `cloud` (see [`PointCloud::ccm_features`]).
pub fn splat_ccm(cloud: &PointCloud, cam: &CameraModel, cfg: &SplatConfig) -> Result<(FeatureGrid, SplatAux)> {
    let feats = cloud.ccm_features();
    if feats.as_slice().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::invalid("ccm features must lie in [0, 1]"));
    }
    let (mut grid, aux) = splat_forward(cloud, &feats, cam, cfg)?;
    // a convex combination of [0, 1] values scaled by S / (S + eps) stays in [0, 1]
    grid.semantics = GridSemantics::Ccm;
    Ok((grid, aux))
}

/// Normalized Gaussian splatting with an inverse-depth soft z-buffer.
///
/// For every pixel center `q`, contributors are the visible points with
/// `|u_k - q|_inf <= radius`; the output is `sum_k w_k f_k / (sum_k w_k + eps_norm)`
/// with `w_k = exp(-|u_k - q|^2 / (2 sigma^2)) / (z_k + eps_depth)` (depth term
/// optional). Pixels without contributors are zero.
pub fn splat_forward_with(
    cloud: &PointCloud,
    feats: &PointFeatures,
    cam: &CameraModel,
    cfg: &SplatConfig,
    exec: Exec,
) -> Result<(FeatureGrid, SplatAux)> {
    cfg.validate()?;
    cam.validate()?;
    let n = cloud.len();
    if feats.len() != n {
        return Err(Error::invalid(format!("{} feature rows for {n} points", feats.len())));
    }
    let dim = feats.dim();
    let (h, w) = (cam.height, cam.width);
    let r = cfg.radius as i64;

    let projections: Vec<Projection> = exec.map(n, |k| cam.project_finite(&cloud.point(k)));

    // Bin visible points by containing pixel over the grid padded by the
    // window radius; points outside cannot reach any pixel center.
    let bin_w = w as i64 + 2 * r;
    let bin_h = h as i64 + 2 * r;
    let mut bins: Vec<Vec<usize>> = vec![Vec::new(); (bin_w * bin_h) as usize];
    for (k, p) in projections.iter().enumerate() {
        if p.culled {
            continue;
        }
        let (bx, by) = (p.uv[0].floor() + r as f64, p.uv[1].floor() + r as f64);
        if bx >= 0.0 && by >= 0.0 && bx < bin_w as f64 && by < bin_h as f64 {
            bins[(by as i64 * bin_w + bx as i64) as usize].push(k);
        }
    }

    let radius = cfg.radius as f64;
    let per_pixel: Vec<PixelAccum> = exec.map(h * w, |pix| {
        let (row, col) = (pix / w, pix % w);
        let q = pixel_center(row, col);
        let mut contrib: Vec<(usize, f64)> = Vec::new();
        // pixel (row, col) sits at bin (row + r, col + r); the window spans +-r bins
        for by in row as i64..=row as i64 + 2 * r {
            for bx in col as i64..=col as i64 + 2 * r {
                for &k in &bins[(by * bin_w + bx) as usize] {
                    let uv = projections[k].uv;
                    if (uv[0] - q[0]).abs() <= radius && (uv[1] - q[1]).abs() <= radius {
                        contrib.push((k, weight(cfg, uv, projections[k].depth, q)));
                    }
                }
            }
        }
        contrib.sort_unstable_by_key(|c| c.0);
        let mut sum = 0.0;
        let mut acc = vec![0.0; dim];
        for &(k, wk) in &contrib {
            sum += wk;
            for (a, f) in acc.iter_mut().zip(feats.row(k)) {
                *a += wk * f;
            }
        }
        if !contrib.is_empty() {
            let denom = sum + cfg.eps_norm;
            for a in acc.iter_mut() {
                *a /= denom;
            }
        }
        (contrib, sum, acc)
    });

    let mut pixel_offsets = Vec::with_capacity(h * w + 1);
    pixel_offsets.push(0);
    let total: usize = per_pixel.iter().map(|p| p.0.len()).sum();
    let mut entry_point = Vec::with_capacity(total);
    let mut entry_weight = Vec::with_capacity(total);
    let mut weight_sums = Vec::with_capacity(h * w);
    let mut values = Vec::with_capacity(h * w * dim);
    for (contrib, sum, acc) in per_pixel {
        for (k, wk) in contrib {
            entry_point.push(k);
            entry_weight.push(wk);
        }
        pixel_offsets.push(entry_point.len());
        weight_sums.push(sum);
        values.extend(acc);
    }
    if values.iter().chain(&entry_weight).any(|v| !v.is_finite()) {
        return Err(Error::Internal("non-finite splat weight or value".into()));
    }

    // transpose: entries of each point in ascending pixel (= entry) order
    let mut point_offsets = vec![0usize; n + 1];
    for &k in &entry_point {
        point_offsets[k + 1] += 1;
    }
    for k in 0..n {
        point_offsets[k + 1] += point_offsets[k];
    }
    let mut cursor = point_offsets.clone();
    let mut point_entries = vec![0usize; total];
    for (e, &k) in entry_point.iter().enumerate() {
        point_entries[cursor[k]] = e;
        cursor[k] += 1;
    }

    let grid = FeatureGrid::from_data(h, w, dim, values.clone(), GridSemantics::Generic)?;
    let aux = SplatAux {
        cfg: *cfg,
        camera: cam.clone(),
        projections,
        feature_dim: dim,
        pixel_offsets,
        entry_point,
        entry_weight,
        weight_sums,
        values,
        point_offsets,
        point_entries,
    };
    Ok((grid, aux))
}

pub fn splat_backward(
    aux: &SplatAux,
    cloud: &PointCloud,
    feats: &PointFeatures,
    upstream: &FeatureGrid,
) -> Result<GradientBundle> {
    splat_backward_with(aux, cloud, feats, upstream, Exec::Parallel, false)
}

/// Reverse-mode derivative of [`splat_forward`] given `dL/dV`.
///
/// With `V_c = N_c / D`, `N_c = sum_k w_k f_kc`, `D = sum_k w_k + eps`:
/// `dL/dw_k = sum_c G_c (f_kc - V_c) / D` and `dL/df_kc = G_c w_k / D`. The
/// weight derivative is chained through the Gaussian (image position), the
/// inverse-depth term and the pinhole projection. `sigma` is held fixed
/// unless `with_sigma` is set.
pub fn splat_backward_with(
    aux: &SplatAux,
    cloud: &PointCloud,
    feats: &PointFeatures,
    upstream: &FeatureGrid,
    exec: Exec,
    with_sigma: bool,
) -> Result<GradientBundle> {
    let n = aux.point_count();
    let dim = aux.feature_dim;
    let (h, w) = (aux.camera.height, aux.camera.width);
    if cloud.len() != n || feats.len() != n || feats.dim() != dim {
        return Err(Error::invalid("cloud or features do not match the forward pass"));
    }
    if upstream.height() != h || upstream.width() != w || upstream.channels() != dim {
        return Err(Error::invalid(format!(
            "upstream grid is {}x{}x{}, forward output is {h}x{w}x{dim}",
            upstream.height(),
            upstream.width(),
            upstream.channels()
        )));
    }
    let cfg = &aux.cfg;

    // dL/dw per contributor entry, pixel-parallel
    let d_entry: Vec<f64> = exec
        .map(h * w, |pix| {
            let range = aux.pixel_offsets[pix]..aux.pixel_offsets[pix + 1];
            if range.is_empty() {
                return Vec::new();
            }
            let g = upstream.pixel(pix);
            let v = &aux.values[pix * dim..(pix + 1) * dim];
            let denom = aux.weight_sums[pix] + cfg.eps_norm;
            aux.entry_point[range]
                .iter()
                .map(|&k| {
                    let f = feats.row(k);
                    (0..dim).map(|c| g[c] * (f[c] - v[c])).sum::<f64>() / denom
                })
                .collect()
        })
        .into_iter()
        .flatten()
        .collect();

    let inv_s2 = 1.0 / (cfg.sigma * cfg.sigma);
    let per_point: Vec<(Vec3, Vec<f64>, f64)> = exec.map(n, |k| {
        let proj = &aux.projections[k];
        let mut d_feat = vec![0.0; dim];
        let (mut du, mut dv, mut dz, mut ds) = (0.0, 0.0, 0.0, 0.0);
        for &e in &aux.point_entries[aux.point_offsets[k]..aux.point_offsets[k + 1]] {
            let pix = pixel_of_entry(&aux.pixel_offsets, e);
            let q = pixel_center(pix / w, pix % w);
            let wk = aux.entry_weight[e];
            let denom = aux.weight_sums[pix] + cfg.eps_norm;
            let g = upstream.pixel(pix);
            for c in 0..dim {
                d_feat[c] += g[c] * wk / denom;
            }
            let dw = d_entry[e] * wk;
            let (ex, ey) = (proj.uv[0] - q[0], proj.uv[1] - q[1]);
            du -= dw * ex * inv_s2;
            dv -= dw * ey * inv_s2;
            if cfg.depth_weighting {
                dz -= dw / (proj.depth + cfg.eps_depth);
            }
            if with_sigma {
                ds += dw * (ex * ex + ey * ey) * inv_s2 / cfg.sigma;
            }
        }
        (aux.camera.pullback(proj, du, dv, dz), d_feat, ds)
    });

    let mut d_points = Vec::with_capacity(n);
    let mut d_feat_flat = Vec::with_capacity(n * dim);
    let mut d_sigma = 0.0;
    for (dp, df, ds) in per_point {
        d_points.push(dp);
        d_feat_flat.extend(df);
        d_sigma += ds;
    }
    if d_points.iter().any(|p| !p.iter().all(|c| c.is_finite())) || !d_sigma.is_finite() {
        return Err(Error::Internal("non-finite splat gradient".into()));
    }
    Ok(GradientBundle {
        d_points,
        d_features: PointFeatures::new(dim, d_feat_flat)?,
        d_sigma: with_sigma.then_some(d_sigma),
    })
}

/// Pixel owning CSR entry `e` (binary search over offsets).
#[inline]
fn pixel_of_entry(offsets: &[usize], e: usize) -> usize {
    offsets.partition_point(|&o| o <= e) - 1
}
