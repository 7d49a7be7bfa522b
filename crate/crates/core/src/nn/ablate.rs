use serde::{Deserialize, Serialize};

use super::{cross_attention, edgeconv_forward, AttentionParams, EdgeConvParams, TokenMatrix};
use crate::error::{Error, Result};
use crate::geometry::{knn, CameraModel, PointCloud};
use crate::io::Provenance;
use crate::projection::{splat_ccm, SplatConfig};

/// Randomly initialized geometry branch plus fusion block.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationParams {
    pub edgeconv: EdgeConvParams,
    pub attention: AttentionParams,
    pub k: usize,
}

impl AblationParams {
    /// Visual tokens are the three CCM channels of the splatted grid.
    pub fn init(channels: usize, key_width: usize, k: usize, seed: u64) -> Self {
        Self {
            edgeconv: EdgeConvParams::init(channels, seed),
            attention: AttentionParams::init(channels, 3, key_width, seed.wrapping_add(1)),
            k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub points: usize,
    pub visual_tokens: usize,
    pub channels: usize,
    pub geometry_norm: f64,
    pub fused_norm: f64,
    /// `|F_fused - F_ablated| / |F_geo|` (Frobenius).
    pub sensitivity: f64,
    /// The ablated output equals the geometry features bit for bit, i.e. the
    /// visual branch only ever enters through the value path.
    pub value_path_only: bool,
    pub provenance: Provenance,
}

/// Runs the fusion block twice, once with the splatted visual tokens and once
/// with them zeroed, and reports how much the output depends on them.
pub fn counterfactual_ablate(
    cloud: &PointCloud,
    cam: &CameraModel,
    cfg: &SplatConfig,
    params: &AblationParams,
) -> Result<AblationReport> {
    let graph = knn(cloud, params.k)?;
    let (f_geo, _) = edgeconv_forward(cloud, &graph, &params.edgeconv)?;
    let (grid, _) = splat_ccm(cloud, cam, cfg)?;
    let visual = TokenMatrix::from_grid(&grid);
    let zeroed = TokenMatrix::zeros(visual.rows(), visual.cols());

    let (fused, _) = cross_attention(&f_geo, &visual, &params.attention)?;
    let (ablated, _) = cross_attention(&f_geo, &zeroed, &params.attention)?;

    let geometry_norm = f_geo.as_matrix().norm();
    if geometry_norm == 0.0 {
        return Err(Error::Internal(
            "geometry features vanished; sensitivity undefined".into(),
        ));
    }
    let diff = fused.as_matrix() - ablated.as_matrix();
    Ok(AblationReport {
        points: cloud.len(),
        visual_tokens: visual.rows(),
        channels: f_geo.cols(),
        geometry_norm,
        fused_norm: fused.as_matrix().norm(),
        sensitivity: diff.norm() / geometry_norm,
        value_path_only: ablated.as_matrix() == f_geo.as_matrix(),
        provenance: Provenance::default().with_config(cfg)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{gen_sphere, normalize_unit};

    #[test]
    fn zeroed_visual_tokens_leave_geometry_untouched() {
        let cloud = normalize_unit(&gen_sphere(96, 5).unwrap());
        let cam = CameraModel::looking_at_origin(16, 16, 3.0).unwrap();
        let params = AblationParams::init(8, 4, 8, 11);
        let r = counterfactual_ablate(&cloud, &cam, &SplatConfig::default(), &params).unwrap();
        assert!(r.value_path_only);
        assert!(r.sensitivity > 0.0);
        assert_eq!((r.points, r.visual_tokens, r.channels), (96, 256, 8));
    }
}
