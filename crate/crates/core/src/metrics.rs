//! Reconstruction losses and evaluation distances between point clouds.
//!
//! Nearest-neighbor queries are exact brute-force scans; ties resolve to the
//! lowest target index, which also fixes the subgradient used at ties.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::geometry::{PointCloud, Vec3};

/// Default cap on `d arccosh(1 + c) / dc` near `c = 0`.
pub const ARC_GRAD_CAP: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    /// Gradient with respect to the first cloud, when requested.
    pub d_x: Option<Vec<Vec3>>,
    /// Set when the arc-CD derivative hit its cap.
    pub grad_capped: bool,
}

impl LossValue {
    fn scalar(value: f64) -> Self {
        Self {
            value,
            d_x: None,
            grad_capped: false,
        }
    }
}

/// For each query point, `(squared distance, index)` of its nearest target.
pub fn nearest_neighbors(query: &[Vec3], target: &[Vec3], exec: Exec) -> Vec<(f64, usize)> {
    exec.map(query.len(), |i| {
        let q = query[i];
        let mut best = (f64::INFINITY, 0);
        for (j, t) in target.iter().enumerate() {
            let d = (q - t).norm_squared();
            if d < best.0 {
                best = (d, j);
            }
        }
        best
    })
}

pub fn chamfer(x: &PointCloud, y: &PointCloud, with_grad: bool) -> LossValue {
    chamfer_with(x, y, with_grad, Exec::Parallel)
}

/// Bidirectional mean squared nearest-neighbor distance.
///
/// Clouds are non-empty by construction, so this cannot fail.
pub fn chamfer_with(x: &PointCloud, y: &PointCloud, with_grad: bool, exec: Exec) -> LossValue {
    let (xp, yp) = (x.points(), y.points());
    let fwd = nearest_neighbors(xp, yp, exec);
    let bwd = nearest_neighbors(yp, xp, exec);
    let (nx, ny) = (xp.len() as f64, yp.len() as f64);
    let value = fwd.iter().map(|m| m.0).sum::<f64>() / nx + bwd.iter().map(|m| m.0).sum::<f64>() / ny;

    let d_x = with_grad.then(|| {
        let mut g: Vec<Vec3> = xp
            .iter()
            .zip(&fwd)
            .map(|(p, &(_, j))| (p - yp[j]) * (2.0 / nx))
            .collect();
        for (q, &(_, i)) in yp.iter().zip(&bwd) {
            g[i] += (xp[i] - q) * (2.0 / ny);
        }
        g
    });
    LossValue {
        value,
        d_x,
        grad_capped: false,
    }
}

/// How the two one-sided unsquared means are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum L1Convention {
    /// `(a + b) / 2`, the usual PCN reporting convention.
    #[default]
    HalvedSum,
    /// `a + b`.
    Sum,
}

pub fn chamfer_l1(x: &PointCloud, y: &PointCloud) -> LossValue {
    chamfer_l1_with(x, y, L1Convention::HalvedSum)
}

/// Chamfer distance with unsquared Euclidean distances.
pub fn chamfer_l1_with(x: &PointCloud, y: &PointCloud, convention: L1Convention) -> LossValue {
    let a = fidelity_with(x, y, Exec::Parallel);
    let b = fidelity_with(y, x, Exec::Parallel);
    LossValue::scalar(match convention {
        L1Convention::HalvedSum => 0.5 * (a + b),
        L1Convention::Sum => a + b,
    })
}

pub fn arc_cd(x: &PointCloud, y: &PointCloud, lambda: f64) -> Result<LossValue> {
    arc_cd_with(x, y, lambda, ARC_GRAD_CAP)
}

/// `lambda * arccosh(1 + chamfer(x, y))` with its gradient.
///
/// The outer derivative `1 / sqrt(c^2 + 2c)` diverges at `c = 0`; it is
/// clamped to `grad_cap` and the result is flagged.
pub fn arc_cd_with(x: &PointCloud, y: &PointCloud, lambda: f64, grad_cap: f64) -> Result<LossValue> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda must be non-negative, got {lambda}")));
    }
    let cd = chamfer(x, y, true);
    let c = cd.value;
    let value = lambda * (1.0 + c).acosh();
    let slope = (c * c + 2.0 * c).sqrt().recip();
    let (slope, capped) = if slope > grad_cap {
        (grad_cap, true)
    } else {
        (slope, false)
    };
    let d_x = cd.d_x.map(|g| g.into_iter().map(|v| v * (lambda * slope)).collect());
    Ok(LossValue {
        value,
        d_x,
        grad_capped: capped,
    })
}

/// Sum of per-stage arc-CD terms against one ground truth.
pub fn total_loss(stages: &[PointCloud], gt: &PointCloud, lambdas: &[f64]) -> Result<LossValue> {
    if stages.is_empty() || stages.len() != lambdas.len() {
        return Err(Error::invalid(format!(
            "{} stages with {} weights",
            stages.len(),
            lambdas.len()
        )));
    }
    let mut value = 0.0;
    for (s, &l) in stages.iter().zip(lambdas) {
        value += arc_cd(s, gt, l)?.value;
    }
    Ok(LossValue::scalar(value))
}

/// Harmonic mean of precision (fraction of `x` within `tau` of `y`) and
/// recall (fraction of `y` within `tau` of `x`).
pub fn fscore(x: &PointCloud, y: &PointCloud, tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::invalid(format!("tau must be positive, got {tau}")));
    }
    let t2 = tau * tau;
    let frac = |a: &PointCloud, b: &PointCloud| {
        let nn = nearest_neighbors(a.points(), b.points(), Exec::Parallel);
        nn.iter().filter(|m| m.0 <= t2).count() as f64 / a.len() as f64
    };
    let p = frac(x, y);
    let r = frac(y, x);
    Ok(if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 })
}

/// One-sided mean unsquared distance from `p_in` to its nearest point in `p_out`.
pub fn fidelity(p_in: &PointCloud, p_out: &PointCloud) -> f64 {
    fidelity_with(p_in, p_out, Exec::Parallel)
}

pub fn fidelity_with(p_in: &PointCloud, p_out: &PointCloud, exec: Exec) -> f64 {
    let nn = nearest_neighbors(p_in.points(), p_out.points(), exec);
    nn.iter().map(|m| m.0.sqrt()).sum::<f64>() / p_in.len() as f64
}

/// Smallest Chamfer distance to any reference and its index (lowest on ties).
pub fn mmd(p_out: &PointCloud, refs: &[PointCloud]) -> Result<(f64, usize)> {
    if refs.is_empty() {
        return Err(Error::invalid("reference set is empty"));
    }
    let mut best = (f64::INFINITY, 0);
    for (i, r) in refs.iter().enumerate() {
        let d = chamfer(p_out, r, false).value;
        if d < best.0 {
            best = (d, i);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(p: &[[f64; 3]]) -> PointCloud {
        PointCloud::from_arrays(p).unwrap()
    }

    #[test]
    fn identical_clouds() {
        let x = cloud(&[[0.0, 1.0, 2.0], [3.0, -1.0, 0.5], [0.2, 0.2, 0.2]]);
        let cd = chamfer(&x, &x, true);
        assert_eq!(cd.value, 0.0);
        assert!(cd.d_x.unwrap().iter().all(|g| *g == Vec3::zeros()));
        assert_eq!(chamfer_l1(&x, &x).value, 0.0);
        assert_eq!(arc_cd(&x, &x, 2.5).unwrap().value, 0.0);
        assert_eq!(fscore(&x, &x, 1e-3).unwrap(), 1.0);
        assert_eq!(fidelity(&x, &x), 0.0);
    }

    #[test]
    fn unit_pair() {
        let x = cloud(&[[0.0, 0.0, 0.0]]);
        let y = cloud(&[[1.0, 0.0, 0.0]]);
        let cd = chamfer(&x, &y, true);
        assert_eq!(cd.value, 2.0);
        // both one-sided terms depend on x: d/dx [(x-1)^2 + (x-1)^2] = -4 at 0
        assert_eq!(cd.d_x.unwrap()[0], Vec3::new(-4.0, 0.0, 0.0));
        assert_eq!(chamfer_l1(&x, &y).value, 1.0);
        assert_eq!(chamfer_l1_with(&x, &y, L1Convention::Sum).value, 2.0);
        assert_eq!(fidelity(&x, &y), 1.0);
    }

    #[test]
    fn arc_gradient_is_capped_at_zero_loss() {
        let x = cloud(&[[0.0, 0.0, 0.0]]);
        let a = arc_cd(&x, &x, 1.0).unwrap();
        assert!(a.grad_capped);
        assert!(a.d_x.unwrap().iter().all(|g| g.iter().all(|c| c.is_finite())));
        assert!(arc_cd(&x, &x, -1.0).is_err());
    }

    #[test]
    fn total_loss_shapes() {
        let x = cloud(&[[0.0, 0.0, 0.0]]);
        assert!(total_loss(std::slice::from_ref(&x), &x, &[1.0, 1.0]).is_err());
        assert!(total_loss(&[], &x, &[]).is_err());
        assert_eq!(total_loss(&[x.clone(), x.clone()], &x, &[1.0, 1.0]).unwrap().value, 0.0);
    }

    #[test]
    fn separated_clouds_score_zero() {
        let x = cloud(&[[0.0, 0.0, 0.0], [0.1, 0.0, 0.0]]);
        let y = cloud(&[[1.0, 0.0, 0.0], [1.1, 0.0, 0.0]]);
        assert_eq!(fscore(&x, &y, 0.09).unwrap(), 0.0);
        assert!(fscore(&x, &y, 0.0).is_err());
    }

    #[test]
    fn mmd_prefers_lowest_index_on_ties() {
        let x = cloud(&[[0.0, 0.0, 0.0]]);
        let a = cloud(&[[1.0, 0.0, 0.0]]);
        let b = cloud(&[[0.0, 1.0, 0.0]]);
        assert_eq!(mmd(&x, &[a.clone(), b, x.clone()]).unwrap(), (0.0, 2));
        let c = cloud(&[[0.0, -1.0, 0.0]]);
        assert_eq!(mmd(&x, &[a, c]).unwrap(), (2.0, 0));
        assert!(mmd(&x, &[]).is_err());
    }
}
