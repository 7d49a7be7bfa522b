//! Hard rasterization and differentiable Gaussian soft splatting.

mod density;
mod hard;
mod splat;

pub use density::{soft_density, soft_density_field, soft_density_field_with, support_measure};
pub use hard::{rasterize_hard, HardMode, HardRaster};
pub use splat::{
    splat_backward, splat_backward_with, splat_ccm, splat_forward, splat_forward_with, GradientBundle, SplatAux,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Splatting hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplatConfig {
    /// Gaussian bandwidth, pixels.
    pub sigma: f64,
    /// Truncation half-width of the square kernel window, pixels.
    pub radius: usize,
    pub eps_norm: f64,
    pub eps_depth: f64,
    pub depth_weighting: bool,
}

impl Default for SplatConfig {
    fn default() -> Self {
        Self::with_radius(4)
    }
}

impl SplatConfig {
    /// Window of half-width `radius` with `sigma = radius / 3`.
    pub fn with_radius(radius: usize) -> Self {
        Self {
            sigma: radius as f64 / 3.0,
            radius,
            eps_norm: 1e-8,
            eps_depth: 1e-6,
            depth_weighting: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.radius == 0 {
            return Err(Error::invalid("radius must be at least 1"));
        }
        if !(self.eps_norm > 0.0 && self.eps_depth > 0.0) || !(self.eps_norm.is_finite() && self.eps_depth.is_finite())
        {
            return Err(Error::invalid("eps_norm and eps_depth must be positive"));
        }
        Ok(())
    }
}

/// Dirac (hard) vs. Gaussian (soft) projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionKind {
    Hard,
    Soft,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridSemantics {
    Depth,
    Ccm,
    Weightsum,
    Generic,
}

/// Dense `height x width x channels` grid, row-major with channels innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
    semantics: GridSemantics,
}

impl FeatureGrid {
    pub fn zeros(height: usize, width: usize, channels: usize, semantics: GridSemantics) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
            semantics,
        }
    }

    pub fn from_data(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f64>,
        semantics: GridSemantics,
    ) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::invalid("grid dimensions must be at least 1"));
        }
        if data.len() != height * width * channels {
            return Err(Error::invalid(format!(
                "grid {height}x{width}x{channels} needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        let grid = Self {
            height,
            width,
            channels,
            data,
            semantics,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("grid contains non-finite values"));
        }
        match self.semantics {
            GridSemantics::Ccm if self.data.iter().any(|v| !(0.0..=1.0).contains(v)) => {
                Err(Error::invalid("ccm grid values must lie in [0, 1]"))
            }
            GridSemantics::Weightsum if self.data.iter().any(|&v| v < 0.0) => {
                Err(Error::invalid("weight-sum grid values must be non-negative"))
            }
            _ => Ok(()),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn semantics(&self) -> GridSemantics {
        self.semantics
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn same_resolution(&self, other: &FeatureGrid) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn get(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.data[(row * self.width + col) * self.channels + ch]
    }

    pub fn set(&mut self, row: usize, col: usize, ch: usize, value: f64) {
        self.data[(row * self.width + col) * self.channels + ch] = value;
    }

    /// Channel values of pixel `index = row * width + col`.
    pub fn pixel(&self, index: usize) -> &[f64] {
        &self.data[index * self.channels..(index + 1) * self.channels]
    }

    pub fn pixel_mut(&mut self, index: usize) -> &mut [f64] {
        &mut self.data[index * self.channels..(index + 1) * self.channels]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Single-channel copy of channel `ch`.
    pub fn channel(&self, ch: usize) -> FeatureGrid {
        let data = self.data.iter().skip(ch).step_by(self.channels).copied().collect();
        Self {
            height: self.height,
            width: self.width,
            channels: 1,
            data,
            semantics: self.semantics,
        }
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Center of pixel `(row, col)` in `(u, v)` image coordinates.
#[inline]
pub fn pixel_center(row: usize, col: usize) -> [f64; 2] {
    [col as f64 + 0.5, row as f64 + 0.5]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(SplatConfig::default().validate().is_ok());
        assert_eq!(SplatConfig::default().radius, 4);
        assert!((SplatConfig::default().sigma - 4.0 / 3.0).abs() < 1e-15);
        let bad = SplatConfig {
            sigma: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SplatConfig {
            radius: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SplatConfig {
            eps_norm: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn grid_semantics_are_checked() {
        assert!(FeatureGrid::from_data(1, 2, 1, vec![0.5, 1.5], GridSemantics::Ccm).is_err());
        assert!(FeatureGrid::from_data(1, 2, 1, vec![0.5, -0.1], GridSemantics::Weightsum).is_err());
        assert!(FeatureGrid::from_data(1, 2, 1, vec![0.5, f64::NAN], GridSemantics::Generic).is_err());
        assert!(FeatureGrid::from_data(1, 2, 1, vec![0.5], GridSemantics::Generic).is_err());
        let g = FeatureGrid::from_data(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0], GridSemantics::Generic).unwrap();
        assert_eq!(g.channel(1).as_slice(), &[2.0, 4.0]);
        assert_eq!(g.get(0, 1, 0), 3.0);
    }
}
