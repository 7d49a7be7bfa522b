//! Minimal neural primitives with hand-written backward passes, and the
//! gradient-flow and counterfactual experiments built from them.

mod ablate;
mod attention;
mod edgeconv;
mod probe;

pub use ablate::{counterfactual_ablate, AblationParams, AblationReport};
pub use attention::{cross_attention, cross_attention_backward, AttentionCache, AttentionGrads, AttentionParams};
pub use edgeconv::{edgeconv_backward, edgeconv_forward, EdgeConvCache, EdgeConvParams};
pub use probe::{grad_flow_probe, NormStats, ProbeReport, PROBE_TOLERANCE};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::projection::FeatureGrid;

/// Hidden width of the EdgeConv perceptron.
pub const HIDDEN_WIDTH: usize = 32;

/// Row-per-token matrix of finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMatrix(DMatrix<f64>);

impl TokenMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("token matrix has non-finite entries"));
        }
        Ok(Self(data))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self(DMatrix::zeros(rows, cols))
    }

    /// One token per pixel, channels as columns.
    pub fn from_grid(grid: &FeatureGrid) -> Self {
        Self(DMatrix::from_row_slice(
            grid.pixel_count(),
            grid.channels(),
            grid.as_slice(),
        ))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }
}

/// Affine layer `y = W x + b` with `W` stored as `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl DenseLayer {
    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for weights and biases.
    pub fn init(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let mut draw = || rng.random_range(-bound..=bound);
        let weight = DMatrix::from_fn(fan_out, fan_in, |_, _| draw());
        let bias = DVector::from_fn(fan_out, |_, _| draw());
        Self { weight, bias }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.nrows()
    }

    /// Applies the layer to every row of `x`.
    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = x * self.weight.transpose();
        for mut row in z.row_iter_mut() {
            row += self.bias.transpose();
        }
        z
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

/// Two-layer perceptron `W2 max(0, W1 x + b1) + b2`, applied row-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub hidden: DenseLayer,
    pub output: DenseLayer,
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    input: DMatrix<f64>,
    pre: DMatrix<f64>,
    act: DMatrix<f64>,
}

impl MlpCache {
    /// Hidden pre-activations, one row per input row.
    pub fn pre_activations(&self) -> &DMatrix<f64> {
        &self.pre
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub hidden: DenseGrads,
    pub output: DenseGrads,
}

impl Mlp {
    pub fn init(input: usize, hidden: usize, output: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hidden = DenseLayer::init(input, hidden, &mut rng);
        let output = DenseLayer::init(hidden.fan_out(), output, &mut rng);
        Self { hidden, output }
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> (DMatrix<f64>, MlpCache) {
        let pre = self.hidden.apply(x);
        let act = pre.map(|v| v.max(0.0));
        let y = self.output.apply(&act);
        (
            y,
            MlpCache {
                input: x.clone(),
                pre,
                act,
            },
        )
    }

    /// Returns `(dL/dx, parameter gradients)`. The ReLU derivative at 0 is 0.
    pub fn backward(&self, cache: &MlpCache, dy: &DMatrix<f64>) -> (DMatrix<f64>, MlpGrads) {
        let d_w2 = dy.transpose() * &cache.act;
        let d_b2 = column_sums(dy);
        let mut d_pre = dy * &self.output.weight;
        d_pre.zip_apply(&cache.pre, |g, z| {
            if z <= 0.0 {
                *g = 0.0;
            }
        });
        let d_w1 = d_pre.transpose() * &cache.input;
        let d_b1 = column_sums(&d_pre);
        let dx = &d_pre * &self.hidden.weight;
        (
            dx,
            MlpGrads {
                hidden: DenseGrads {
                    weight: d_w1,
                    bias: d_b1,
                },
                output: DenseGrads {
                    weight: d_w2,
                    bias: d_b2,
                },
            },
        )
    }
}

fn column_sums(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(m.ncols(), |c, _| m.column(c).sum())
}
