use nalgebra::DMatrix;

use super::{Mlp, MlpCache, MlpGrads, TokenMatrix, HIDDEN_WIDTH};
use crate::error::{Error, Result};
use crate::geometry::{NeighborGraph, PointCloud, Vec3};

/// Shared edge perceptron `phi(p_i, p_j - p_i)`: 6 inputs, hidden width 32.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeConvParams {
    pub mlp: Mlp,
}

impl EdgeConvParams {
    pub fn init(out_channels: usize, seed: u64) -> Self {
        Self {
            mlp: Mlp::init(6, HIDDEN_WIDTH, out_channels, seed),
        }
    }

    pub fn out_channels(&self) -> usize {
        self.mlp.output.fan_out()
    }
}

#[derive(Debug, Clone)]
pub struct EdgeConvCache {
    graph: NeighborGraph,
    mlp: MlpCache,
    /// Winning edge row for each `(point, channel)`, row-major.
    argmax: Vec<usize>,
    /// Per-edge outputs, `N*k x C`.
    edge_out: DMatrix<f64>,
}

impl EdgeConvCache {
    pub fn edge_outputs(&self) -> &DMatrix<f64> {
        &self.edge_out
    }

    pub fn mlp_cache(&self) -> &MlpCache {
        &self.mlp
    }

    pub fn graph(&self) -> &NeighborGraph {
        &self.graph
    }

    /// Winning edge row for each `(point, channel)`, row-major.
    pub fn argmax(&self) -> &[usize] {
        &self.argmax
    }
}

/// `h_i = max_{j in N(i)} phi(p_i, p_j - p_i)`, channelwise.
///
/// Ties pick the neighbor with the lower point index.
pub fn edgeconv_forward(
    cloud: &PointCloud,
    graph: &NeighborGraph,
    params: &EdgeConvParams,
) -> Result<(TokenMatrix, EdgeConvCache)> {
    let n = cloud.len();
    if graph.len() != n {
        return Err(Error::invalid(format!(
            "graph has {} nodes, cloud has {n} points",
            graph.len()
        )));
    }
    let k = graph.k();
    let pts = cloud.points();
    let mut edges = DMatrix::zeros(n * k, 6);
    for i in 0..n {
        for (m, &j) in graph.neighbors(i).iter().enumerate() {
            let d = pts[j] - pts[i];
            let row = i * k + m;
            for a in 0..3 {
                edges[(row, a)] = pts[i][a];
                edges[(row, 3 + a)] = d[a];
            }
        }
    }
    let (edge_out, mlp) = params.mlp.forward(&edges);
    let c = edge_out.ncols();
    let mut out = DMatrix::zeros(n, c);
    let mut argmax = vec![0usize; n * c];
    for i in 0..n {
        let nbrs = graph.neighbors(i);
        for ch in 0..c {
            let mut best = 0;
            for m in 1..k {
                let (v, bv) = (edge_out[(i * k + m, ch)], edge_out[(i * k + best, ch)]);
                if v > bv || (v == bv && nbrs[m] < nbrs[best]) {
                    best = m;
                }
            }
            argmax[i * c + ch] = i * k + best;
            out[(i, ch)] = edge_out[(i * k + best, ch)];
        }
    }
    Ok((
        TokenMatrix::new(out)?,
        EdgeConvCache {
            graph: graph.clone(),
            mlp,
            argmax,
            edge_out,
        },
    ))
}

/// Routes `dL/dh` through the selected edges and the perceptron.
/// Returns `(dL/dp, dL/dparams)`; the neighbor graph is treated as fixed.
pub fn edgeconv_backward(
    cache: &EdgeConvCache,
    params: &EdgeConvParams,
    upstream: &TokenMatrix,
) -> Result<(Vec<Vec3>, MlpGrads)> {
    let n = cache.graph.len();
    let k = cache.graph.k();
    let c = cache.edge_out.ncols();
    if upstream.rows() != n || upstream.cols() != c {
        return Err(Error::invalid(format!(
            "upstream is {}x{}, expected {n}x{c}",
            upstream.rows(),
            upstream.cols()
        )));
    }
    let up = upstream.as_matrix();
    let mut d_edge = DMatrix::zeros(n * k, c);
    for i in 0..n {
        for ch in 0..c {
            d_edge[(cache.argmax[i * c + ch], ch)] += up[(i, ch)];
        }
    }
    let (d_in, grads) = params.mlp.backward(&cache.mlp, &d_edge);
    let mut d_points = vec![Vec3::zeros(); n];
    for i in 0..n {
        for (m, &j) in cache.graph.neighbors(i).iter().enumerate() {
            let row = i * k + m;
            for a in 0..3 {
                d_points[i][a] += d_in[(row, a)] - d_in[(row, 3 + a)];
                d_points[j][a] += d_in[(row, 3 + a)];
            }
        }
    }
    Ok((d_points, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::knn;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// phi(x) = x via relu(x) - relu(-x).
    fn identity_params() -> EdgeConvParams {
        let eye = DMatrix::<f64>::identity(6, 6);
        let mut w1 = DMatrix::zeros(12, 6);
        w1.rows_mut(0, 6).copy_from(&eye);
        w1.rows_mut(6, 6).copy_from(&(-&eye));
        let mut w2 = DMatrix::zeros(6, 12);
        w2.columns_mut(0, 6).copy_from(&eye);
        w2.columns_mut(6, 6).copy_from(&(-&eye));
        EdgeConvParams {
            mlp: Mlp {
                hidden: super::super::DenseLayer {
                    weight: w1,
                    bias: DVector::zeros(12),
                },
                output: super::super::DenseLayer {
                    weight: w2,
                    bias: DVector::zeros(6),
                },
            },
        }
    }

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud {
        PointCloud::new(
            (0..n)
                .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn degenerate_edge_for_single_point() {
        let cloud = PointCloud::from_arrays(&[[0.3, -0.2, 0.9]]).unwrap();
        let g = knn(&cloud, 3).unwrap();
        let params = EdgeConvParams::init(5, 1);
        let (h, _) = edgeconv_forward(&cloud, &g, &params).unwrap();
        let x = DMatrix::from_row_slice(1, 6, &[0.3, -0.2, 0.9, 0.0, 0.0, 0.0]);
        let (want, _) = params.mlp.forward(&x);
        assert_eq!(h.as_matrix().row(0), want.row(0));
    }

    #[test]
    fn neighbor_order_does_not_matter() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cloud = random_cloud(&mut rng, 10);
        let g = knn(&cloud, 4).unwrap();
        let lists: Vec<Vec<usize>> = (0..10)
            .map(|i| {
                let mut l = g.neighbors(i).to_vec();
                l.reverse();
                l
            })
            .collect();
        let rev = NeighborGraph::from_lists(10, 4, &lists).unwrap();
        let params = EdgeConvParams::init(8, 2);
        let (a, _) = edgeconv_forward(&cloud, &g, &params).unwrap();
        let (b, _) = edgeconv_forward(&cloud, &rev, &params).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn matches_per_edge_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10 {
            let n = rng.random_range(2..30);
            let cloud = random_cloud(&mut rng, n);
            let k = rng.random_range(1..6);
            let g = knn(&cloud, k).unwrap();
            let params = EdgeConvParams::init(4, rng.random());
            let (h, _) = edgeconv_forward(&cloud, &g, &params).unwrap();
            let (w1, b1, w2, b2) = (
                &params.mlp.hidden.weight,
                &params.mlp.hidden.bias,
                &params.mlp.output.weight,
                &params.mlp.output.bias,
            );
            for i in 0..n {
                let mut best = [f64::NEG_INFINITY; 4];
                for &j in g.neighbors(i) {
                    let (pi, pj) = (cloud.points()[i], cloud.points()[j]);
                    let x = [pi.x, pi.y, pi.z, pj.x - pi.x, pj.y - pi.y, pj.z - pi.z];
                    let mut hid = [0.0; 32];
                    for r in 0..32 {
                        let mut s = b1[r];
                        for c in 0..6 {
                            s += w1[(r, c)] * x[c];
                        }
                        hid[r] = if s > 0.0 { s } else { 0.0 };
                    }
                    for o in 0..4 {
                        let mut s = b2[o];
                        for r in 0..32 {
                            s += w2[(o, r)] * hid[r];
                        }
                        best[o] = best[o].max(s);
                    }
                }
                for (o, b) in best.iter().enumerate() {
                    assert!((h.as_matrix()[(i, o)] - b).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn point_order_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cloud = random_cloud(&mut rng, 12);
        let params = EdgeConvParams::init(6, 3);
        let (h, _) = edgeconv_forward(&cloud, &knn(&cloud, 3).unwrap(), &params).unwrap();
        let perm: Vec<usize> = (0..12).rev().collect();
        let permuted = PointCloud::new(perm.iter().map(|&p| cloud.points()[p]).collect()).unwrap();
        let (hp, _) = edgeconv_forward(&permuted, &knn(&permuted, 3).unwrap(), &params).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            assert_eq!(hp.as_matrix().row(i), h.as_matrix().row(p));
        }
    }

    #[test]
    fn zero_upstream_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cloud = random_cloud(&mut rng, 6);
        let params = EdgeConvParams::init(3, 4);
        let (_, cache) = edgeconv_forward(&cloud, &knn(&cloud, 2).unwrap(), &params).unwrap();
        let (dp, dparams) = edgeconv_backward(&cache, &params, &TokenMatrix::zeros(6, 3)).unwrap();
        assert!(dp.iter().all(|g| *g == Vec3::zeros()));
        assert!(dparams.hidden.weight.iter().all(|&v| v == 0.0));
        assert!(edgeconv_backward(&cache, &params, &TokenMatrix::zeros(5, 3)).is_err());
    }

    #[test]
    fn identity_phi_routes_upstream_to_inputs() {
        // two points, k = 1: point 0's single edge is (p0, p1 - p0)
        let cloud = PointCloud::from_arrays(&[[0.1, 0.2, 0.3], [0.5, 0.7, 0.9]]).unwrap();
        let g = knn(&cloud, 1).unwrap();
        let params = identity_params();
        let (h, cache) = edgeconv_forward(&cloud, &g, &params).unwrap();
        assert!((h.as_matrix()[(0, 3)] - 0.4).abs() < 1e-15);
        let mut up = DMatrix::zeros(2, 6);
        up.row_mut(0).copy_from_slice(&[1.0, 2.0, 3.0, 10.0, 20.0, 30.0]);
        let (dp, _) = edgeconv_backward(&cache, &params, &TokenMatrix::new(up).unwrap()).unwrap();
        // d/dp0 = g[0..3] - g[3..6], d/dp1 = g[3..6]
        assert_eq!(dp[0], Vec3::new(-9.0, -18.0, -27.0));
        assert_eq!(dp[1], Vec3::new(10.0, 20.0, 30.0));
    }
}
