use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DenseLayer, TokenMatrix};
use crate::error::{Error, Result};

/// Single-head projections: queries `C -> d`, keys `C_v -> d`, values `C_v -> C`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub w_q: DMatrix<f64>,
    pub w_k: DMatrix<f64>,
    pub w_v: DMatrix<f64>,
}

impl AttentionParams {
    pub fn init(channels: usize, visual_channels: usize, d: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // DenseLayer stores out x in; projections act on row vectors, so transpose
        let w_q = DenseLayer::init(channels, d, &mut rng).weight.transpose();
        let w_k = DenseLayer::init(visual_channels, d, &mut rng).weight.transpose();
        let w_v = DenseLayer::init(visual_channels, channels, &mut rng).weight.transpose();
        Self { w_q, w_k, w_v }
    }

    pub fn key_width(&self) -> usize {
        self.w_q.ncols()
    }
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    f_geo: DMatrix<f64>,
    visual: DMatrix<f64>,
    q: DMatrix<f64>,
    k: DMatrix<f64>,
    v: DMatrix<f64>,
    attn: DMatrix<f64>,
    scale: f64,
}

impl AttentionCache {
    /// Row-stochastic attention matrix, `N x M`.
    pub fn attention(&self) -> &DMatrix<f64> {
        &self.attn
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionGrads {
    pub d_geo: DMatrix<f64>,
    pub d_visual: DMatrix<f64>,
    pub d_wq: DMatrix<f64>,
    pub d_wk: DMatrix<f64>,
    pub d_wv: DMatrix<f64>,
}

/// `F_geo + softmax((F_geo W_Q)(V W_K)^T / sqrt(d)) (V W_V)`.
pub fn cross_attention(
    f_geo: &TokenMatrix,
    visual: &TokenMatrix,
    params: &AttentionParams,
) -> Result<(TokenMatrix, AttentionCache)> {
    let d = params.key_width();
    if d == 0 {
        return Err(Error::invalid("attention key width must be at least 1"));
    }
    let (c, cv) = (f_geo.cols(), visual.cols());
    let shapes_ok = params.w_q.nrows() == c
        && params.w_k.nrows() == cv
        && params.w_k.ncols() == d
        && params.w_v.nrows() == cv
        && params.w_v.ncols() == c;
    if !shapes_ok {
        return Err(Error::invalid(format!(
            "attention params W_Q {:?}, W_K {:?}, W_V {:?} do not fit queries with {c} and tokens with {cv} channels",
            params.w_q.shape(),
            params.w_k.shape(),
            params.w_v.shape()
        )));
    }
    if visual.rows() == 0 {
        return Err(Error::invalid("no visual tokens"));
    }
    let f = f_geo.as_matrix();
    let vis = visual.as_matrix();
    let q = f * &params.w_q;
    let k = vis * &params.w_k;
    let v = vis * &params.w_v;
    let scale = 1.0 / (d as f64).sqrt();
    let mut attn = (&q * k.transpose()) * scale;
    for mut row in attn.row_iter_mut() {
        let m = row.max();
        row.apply(|x| *x = (*x - m).exp());
        let s = row.sum();
        row /= s;
    }
    let out = f + &attn * &v;
    let cache = AttentionCache {
        f_geo: f.clone(),
        visual: vis.clone(),
        q,
        k,
        v,
        attn,
        scale,
    };
    Ok((TokenMatrix::new(out)?, cache))
}

pub fn cross_attention_backward(
    cache: &AttentionCache,
    params: &AttentionParams,
    upstream: &TokenMatrix,
) -> Result<AttentionGrads> {
    let g = upstream.as_matrix();
    if g.shape() != cache.f_geo.shape() {
        return Err(Error::invalid(format!(
            "upstream is {:?}, output is {:?}",
            g.shape(),
            cache.f_geo.shape()
        )));
    }
    let a = &cache.attn;
    let d_a = g * cache.v.transpose();
    let d_v = a.transpose() * g;
    // softmax: dS = A .* (dA - rowsum(dA .* A))
    let mut d_s = a.component_mul(&d_a);
    for (mut row, a_row) in d_s.row_iter_mut().zip(a.row_iter()) {
        let dot = row.sum();
        row.zip_apply(&a_row, |x, p| *x -= p * dot);
    }
    let d_q = (&d_s * &cache.k) * cache.scale;
    let d_k = (d_s.transpose() * &cache.q) * cache.scale;
    Ok(AttentionGrads {
        d_geo: g + &d_q * params.w_q.transpose(),
        d_visual: &d_k * params.w_k.transpose() + &d_v * params.w_v.transpose(),
        d_wq: cache.f_geo.transpose() * &d_q,
        d_wk: cache.visual.transpose() * &d_k,
        d_wv: cache.visual.transpose() * &d_v,
    })
}
