//! Differentiable soft splatting of point clouds onto image grids, together
//! with the reconstruction metrics, information-theoretic grid analysis and
//! small neural building blocks used to study it.
//!
//! The crate is organized bottom-up:
//!
//! - [`geometry`]: point clouds, pinhole cameras, k-NN graphs, normalization
//!   and synthetic data.
//! - [`projection`]: hard z-buffer rasterization, Gaussian soft splatting
//!   with its backward pass, and projected densities.
//! - [`metrics`]: Chamfer-family losses, F-score, fidelity and MMD.
//! - [`infotheory`]: entropy, coverage and pointwise mutual information of
//!   projected grids.
//! - [`nn`]: EdgeConv, cross-attention, the gradient-flow probe and the
//!   counterfactual ablation.
//! - [`gradcheck`]: finite-difference verification of every backward pass.
//! - [`io`] and [`config`]: file formats, reports and run configuration.

// `!(a < b)` is used on purpose throughout so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod exec;
pub mod geometry;
pub mod gradcheck;
pub mod infotheory;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod projection;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use exec::Exec;
pub use geometry::{CameraModel, PointCloud, PointFeatures, Vec3};
pub use projection::{FeatureGrid, GridSemantics, ProjectionKind, SplatConfig};
