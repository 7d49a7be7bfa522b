//! Channel-aware entropy, spatial coverage, CMIT and PMI diagnostics for
//! projected feature grids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraModel, PointCloud};
use crate::io::Provenance;
use crate::projection::{
    rasterize_hard, soft_density_field, splat_ccm, FeatureGrid, GridSemantics, HardMode, SplatConfig,
};

/// Log-ratio assigned to pixels where the soft density is exactly zero.
pub const PMI_FLOOR: f64 = -30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisParams {
    pub bins: usize,
    pub range: [f64; 2],
    /// Coverage threshold on accumulated weight.
    pub tau: f64,
    pub foreground_only: bool,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        Self {
            bins: 256,
            range: [0.0, 1.0],
            tau: 1e-6,
            foreground_only: true,
        }
    }
}

impl AnalysisParams {
    pub fn validate(&self) -> Result<()> {
        if self.bins < 2 {
            return Err(Error::invalid("bins must be at least 2"));
        }
        if !(self.range[0] < self.range[1]) || !self.range.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid(format!("invalid value range {:?}", self.range)));
        }
        if !(self.tau >= 0.0) || !self.tau.is_finite() {
            return Err(Error::invalid(format!("tau must be non-negative, got {}", self.tau)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub per_channel_bits: Vec<f64>,
    pub total_bits: f64,
    pub bins: usize,
    pub value_range: [f64; 2],
    pub foreground_only: bool,
    /// Pixels that entered the histograms.
    pub sampled_pixels: usize,
    /// Set when masking left no pixels.
    pub empty: bool,
}

/// Shannon entropy (bits) of each channel's value histogram, summed over
/// channels.
///
/// Values are binned into `bins` equal-width bins over `range`, out-of-range
/// values clamp to the edge bins. With `foreground_only`, pixels whose
/// channels are all zero are skipped.
pub fn channel_entropy(
    grid: &FeatureGrid,
    bins: usize,
    range: [f64; 2],
    foreground_only: bool,
) -> Result<EntropyReport> {
    AnalysisParams {
        bins,
        range,
        tau: 0.0,
        foreground_only,
    }
    .validate()?;
    let c = grid.channels();
    let mut hist = vec![vec![0u64; bins]; c];
    let mut sampled = 0usize;
    let scale = bins as f64 / (range[1] - range[0]);
    for pix in 0..grid.pixel_count() {
        let vals = grid.pixel(pix);
        if foreground_only && vals.iter().all(|&v| v == 0.0) {
            continue;
        }
        sampled += 1;
        for (h, &v) in hist.iter_mut().zip(vals) {
            let b = ((v - range[0]) * scale).floor().clamp(0.0, (bins - 1) as f64) as usize;
            h[b] += 1;
        }
    }
    let per_channel_bits: Vec<f64> = if sampled == 0 {
        vec![0.0; c]
    } else {
        hist.iter().map(|h| shannon_bits(h, sampled as f64)).collect()
    };
    Ok(EntropyReport {
        total_bits: per_channel_bits.iter().sum(),
        per_channel_bits,
        bins,
        value_range: range,
        foreground_only,
        sampled_pixels: sampled,
        empty: sampled == 0,
    })
}

fn shannon_bits(counts: &[u64], total: f64) -> f64 {
    let h: f64 = counts
        .iter()
        .filter(|&&n| n > 0)
        .map(|&n| {
            let p = n as f64 / total;
            -p * p.log2()
        })
        .sum();
    // a single occupied bin gives -1 * log2(1) = -0.0
    h.max(0.0)
}

/// Fraction of pixels whose accumulated weight exceeds `tau`.
pub fn coverage(weights: &FeatureGrid, tau: f64) -> Result<f64> {
    if weights.semantics() != GridSemantics::Weightsum || weights.channels() != 1 {
        return Err(Error::invalid("coverage needs a single-channel weight-sum grid"));
    }
    if !(tau >= 0.0) {
        return Err(Error::invalid(format!("tau must be non-negative, got {tau}")));
    }
    let active = weights.as_slice().iter().filter(|&&w| w > tau).count();
    Ok(active as f64 / weights.pixel_count() as f64)
}

/// Foreground channel entropy times coverage.
pub fn cmit(grid: &FeatureGrid, weights: &FeatureGrid, params: &AnalysisParams) -> Result<f64> {
    Ok(analyze_grid("grid", grid, weights, params, Provenance::default())?.cmit)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub strategy: String,
    pub semantics: GridSemantics,
    pub entropy: EntropyReport,
    pub coverage: f64,
    /// `entropy.total_bits * coverage`; coverage is a ratio in [0, 1].
    pub cmit: f64,
    pub params: AnalysisParams,
    pub provenance: Provenance,
}

pub fn analyze_grid(
    strategy: &str,
    grid: &FeatureGrid,
    weights: &FeatureGrid,
    params: &AnalysisParams,
    provenance: Provenance,
) -> Result<AnalysisReport> {
    params.validate()?;
    if !grid.same_resolution(weights) {
        return Err(Error::invalid(format!(
            "grid is {}x{}, weights are {}x{}",
            grid.height(),
            grid.width(),
            weights.height(),
            weights.width()
        )));
    }
    let entropy = channel_entropy(grid, params.bins, params.range, params.foreground_only)?;
    let cov = coverage(weights, params.tau)?;
    Ok(AnalysisReport {
        strategy: strategy.to_string(),
        semantics: grid.semantics(),
        cmit: entropy.total_bits * cov,
        coverage: cov,
        entropy,
        params: *params,
        provenance,
    })
}

/// Reference distribution over pixels for [`pmi_field`].
#[derive(Debug, Clone)]
pub enum Prior {
    Uniform,
    /// Strictly positive single-channel grid; rescaled to unit mass.
    Grid(FeatureGrid),
}

/// Per-pixel `ln(P_soft / P_prior)` with both distributions normalized to
/// unit mass over the pixel grid.
pub fn pmi_field(cloud: &PointCloud, cam: &CameraModel, cfg: &SplatConfig, prior: &Prior) -> Result<FeatureGrid> {
    let density = soft_density_field(cloud, cam, cfg)?;
    let prior = match prior {
        Prior::Uniform => FeatureGrid::from_data(
            cam.height,
            cam.width,
            1,
            vec![1.0 / (cam.height * cam.width) as f64; cam.height * cam.width],
            GridSemantics::Generic,
        )?,
        Prior::Grid(g) => {
            if !g.same_resolution(&density) || g.channels() != 1 {
                return Err(Error::invalid("prior must be single-channel at the camera resolution"));
            }
            if g.as_slice().iter().any(|&v| !(v > 0.0)) {
                return Err(Error::invalid("prior must be strictly positive"));
            }
            let z: f64 = g.as_slice().iter().sum();
            let data = g.as_slice().iter().map(|v| v / z).collect();
            FeatureGrid::from_data(g.height(), g.width(), 1, data, GridSemantics::Generic)?
        }
    };
    pmi_from_density(&density, &prior, PMI_FLOOR)
}

/// `ln(density / prior)` per pixel, `floor` where the density is zero.
pub fn pmi_from_density(density: &FeatureGrid, prior: &FeatureGrid, floor: f64) -> Result<FeatureGrid> {
    if !density.same_resolution(prior) || density.channels() != 1 || prior.channels() != 1 {
        return Err(Error::invalid(
            "density and prior must be single-channel grids of equal size",
        ));
    }
    if prior.as_slice().iter().any(|&v| !(v > 0.0)) {
        return Err(Error::invalid("prior must be strictly positive"));
    }
    let data = density
        .as_slice()
        .iter()
        .zip(prior.as_slice())
        .map(|(&d, &p)| if d > 0.0 { (d / p).ln() } else { floor })
        .collect();
    FeatureGrid::from_data(density.height(), density.width(), 1, data, GridSemantics::Generic)
}

/// Density-weighted mean of a PMI field: the KL divergence of the density
/// from the prior (nats). Zero-density pixels contribute nothing.
pub fn density_weighted_mean(density: &FeatureGrid, pmi: &FeatureGrid) -> f64 {
    density
        .as_slice()
        .iter()
        .zip(pmi.as_slice())
        .filter(|(d, _)| **d > 0.0)
        .map(|(d, m)| d * m)
        .sum()
}

/// Hard vs. soft analysis of the same cloud and camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub hard: AnalysisReport,
    pub soft: AnalysisReport,
    pub hard_empty: bool,
    pub soft_empty: bool,
    /// `soft.coverage / hard.coverage`; absent when hard coverage is zero.
    pub coverage_gain: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub report: ComparisonReport,
    pub hard_grid: FeatureGrid,
    pub soft_grid: FeatureGrid,
}

/// Rasterizes the CCM features hard and soft with identical inputs and
/// analyzes both grids.
pub fn compare_strategies(
    cloud: &PointCloud,
    cam: &CameraModel,
    cfg: &SplatConfig,
    params: &AnalysisParams,
    provenance: Provenance,
) -> Result<Comparison> {
    let hard = rasterize_hard(cloud, cam, HardMode::Ccm)?;
    let (soft_grid, aux) = splat_ccm(cloud, cam, cfg)?;
    let soft_weights = aux.weight_grid();
    let hard_report = analyze_grid("hard", &hard.grid, &hard.hits, params, provenance.clone())?;
    let soft_report = analyze_grid("soft", &soft_grid, &soft_weights, params, provenance)?;
    let coverage_gain = (hard_report.coverage > 0.0).then(|| soft_report.coverage / hard_report.coverage);
    Ok(Comparison {
        report: ComparisonReport {
            hard_empty: hard.empty,
            soft_empty: soft_weights.as_slice().iter().all(|&w| w == 0.0),
            hard: hard_report,
            soft: soft_report,
            coverage_gain,
        },
        hard_grid: hard.grid,
        soft_grid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(h: usize, w: usize, c: usize, data: Vec<f64>) -> FeatureGrid {
        FeatureGrid::from_data(h, w, c, data, GridSemantics::Generic).unwrap()
    }

    fn weights(data: Vec<f64>) -> FeatureGrid {
        FeatureGrid::from_data(1, data.len(), 1, data, GridSemantics::Weightsum).unwrap()
    }

    #[test]
    fn constant_grid_has_zero_entropy() {
        let r = channel_entropy(&grid(4, 4, 3, vec![0.3; 48]), 256, [0.0, 1.0], false).unwrap();
        assert_eq!(r.per_channel_bits, vec![0.0; 3]);
        assert_eq!(r.total_bits, 0.0);
    }

    #[test]
    fn two_equal_bins_give_one_bit() {
        let data: Vec<f64> = (0..64).map(|i| if i % 2 == 0 { 0.0 } else { 1.0 }).collect();
        let r = channel_entropy(&grid(8, 8, 1, data), 256, [0.0, 1.0], false).unwrap();
        assert!((r.total_bits - 1.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_fill_gives_log_bins() {
        let data: Vec<f64> = (0..256).map(|i| (i as f64 + 0.5) / 256.0).collect();
        let r = channel_entropy(&grid(16, 16, 1, data), 256, [0.0, 1.0], false).unwrap();
        assert!((r.total_bits - 8.0).abs() < 1e-12);
    }

    #[test]
    fn masking_skips_background() {
        let mut data = vec![0.0; 16];
        data[3] = 0.25;
        data[7] = 0.75;
        let g = grid(4, 4, 1, data);
        let masked = channel_entropy(&g, 4, [0.0, 1.0], true).unwrap();
        assert_eq!(masked.sampled_pixels, 2);
        assert!((masked.total_bits - 1.0).abs() < 1e-15);
        let empty = channel_entropy(&grid(2, 2, 1, vec![0.0; 4]), 4, [0.0, 1.0], true).unwrap();
        assert!(empty.empty);
        assert_eq!(empty.total_bits, 0.0);
    }

    #[test]
    fn out_of_range_values_clamp() {
        let g = grid(1, 4, 1, vec![-5.0, 0.0, 1.0, 7.0]);
        let r = channel_entropy(&g, 2, [0.0, 1.0], false).unwrap();
        assert!((r.total_bits - 1.0).abs() < 1e-15);
        assert!(channel_entropy(&g, 1, [0.0, 1.0], false).is_err());
        assert!(channel_entropy(&g, 4, [1.0, 1.0], false).is_err());
    }

    #[test]
    fn coverage_counts_above_threshold() {
        assert_eq!(coverage(&weights(vec![0.0; 10]), 1e-6).unwrap(), 0.0);
        assert_eq!(coverage(&weights(vec![1.0; 10]), 1e-6).unwrap(), 1.0);
        assert_eq!(coverage(&weights(vec![0.0, 1e-7, 2e-6, 3.0]), 1e-6).unwrap(), 0.5);
        assert!(coverage(&grid(1, 2, 1, vec![1.0, 1.0]), 0.0).is_err());
    }

    #[test]
    fn cmit_is_the_product() {
        // 4 foreground pixels with values in 16 distinct bins: 2 bits per channel, 2 channels
        let mut data = vec![0.0; 32];
        for (i, px) in [0usize, 5, 10, 15].iter().enumerate() {
            data[px * 2] = (i as f64 * 4.0 + 0.5) / 16.0;
            data[px * 2 + 1] = (i as f64 * 4.0 + 1.5) / 16.0;
        }
        let g = grid(4, 4, 2, data);
        let mut w = vec![0.0; 16];
        w[..8].iter_mut().for_each(|v| *v = 1.0);
        let w = FeatureGrid::from_data(4, 4, 1, w, GridSemantics::Weightsum).unwrap();
        let params = AnalysisParams {
            bins: 16,
            ..Default::default()
        };
        let r = analyze_grid("t", &g, &w, &params, Provenance::default()).unwrap();
        assert!((r.entropy.total_bits - 4.0).abs() < 1e-15);
        assert_eq!(r.coverage, 0.5);
        assert_eq!(r.cmit, 2.0);
        assert_eq!(r.cmit, r.entropy.total_bits * r.coverage);

        let zero = FeatureGrid::zeros(4, 4, 1, GridSemantics::Weightsum);
        assert_eq!(cmit(&g, &zero, &params).unwrap(), 0.0);
        let wrong = FeatureGrid::zeros(4, 5, 1, GridSemantics::Weightsum);
        assert!(cmit(&g, &wrong, &params).is_err());
    }

    #[test]
    fn entropy_is_permutation_invariant_over_pixels() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut pixels: Vec<[f64; 3]> = (0..100).map(|_| [rng.random(), rng.random(), 0.0]).collect();
        let flat = |p: &[[f64; 3]]| p.iter().flatten().copied().collect::<Vec<_>>();
        let a = channel_entropy(&grid(10, 10, 3, flat(&pixels)), 32, [0.0, 1.0], true).unwrap();
        pixels.shuffle(&mut rng);
        let b = channel_entropy(&grid(10, 10, 3, flat(&pixels)), 32, [0.0, 1.0], true).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pmi_of_prior_itself_is_zero() {
        let prior = grid(3, 3, 1, vec![1.0 / 9.0; 9]);
        let pmi = pmi_from_density(&prior, &prior, PMI_FLOOR).unwrap();
        assert!(pmi.as_slice().iter().all(|&v| v == 0.0));
        let zero_prior = grid(3, 3, 1, vec![0.0; 9]);
        assert!(pmi_from_density(&prior, &zero_prior, PMI_FLOOR).is_err());
    }

    #[test]
    fn pmi_peaks_at_projected_pixel_and_kl_is_nonnegative() {
        let cam = CameraModel::new(
            [1.0, 1.0],
            [0.0, 0.0],
            [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            [0.0; 3],
            16,
            16,
        )
        .unwrap();
        let cloud = PointCloud::from_arrays(&[[5.2, 9.9, 1.0]]).unwrap();
        let cfg = SplatConfig::default();
        let pmi = pmi_field(&cloud, &cam, &cfg, &Prior::Uniform).unwrap();
        let argmax = (0..256)
            .max_by(|&a, &b| pmi.as_slice()[a].total_cmp(&pmi.as_slice()[b]))
            .unwrap();
        assert_eq!((argmax / 16, argmax % 16), (9, 5));

        let density = soft_density_field(&cloud, &cam, &cfg).unwrap();
        let kl = density_weighted_mean(&density, &pmi);
        // independent KL by direct summation against the uniform prior
        let direct: f64 = density
            .as_slice()
            .iter()
            .filter(|&&d| d > 0.0)
            .map(|&d| d * (d * 256.0).ln())
            .sum();
        assert!((kl - direct).abs() <= 1e-12);
        assert!(kl >= 0.0);

        let bad = Prior::Grid(FeatureGrid::zeros(16, 16, 1, GridSemantics::Generic));
        assert!(pmi_field(&cloud, &cam, &cfg, &bad).is_err());
    }

    #[test]
    fn culled_cloud_compares_as_empty() {
        let cam = CameraModel::looking_at_origin(16, 16, 3.0).unwrap();
        let cloud = PointCloud::from_arrays(&[[0.0, 0.0, -5.0]]).unwrap();
        let c = compare_strategies(
            &cloud,
            &cam,
            &SplatConfig::default(),
            &AnalysisParams::default(),
            Provenance::default(),
        )
        .unwrap();
        assert!(c.report.hard_empty && c.report.soft_empty);
        assert_eq!(c.report.coverage_gain, None);
    }
}
