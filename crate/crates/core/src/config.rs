//! Run configuration: built-in defaults, optionally overridden by a TOML
//! file (unknown keys rejected), then by command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CameraModel;
use crate::infotheory::AnalysisParams;
use crate::projection::SplatConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    /// Synthetic data generation.
    pub data: u64,
    /// Network parameter initialization.
    pub params: u64,
    /// Probe loss masks and randomized instances.
    pub probe: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            data: 42,
            params: 7,
            probe: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub camera: CameraModel,
    pub splat: SplatConfig,
    pub analysis: AnalysisParams,
    pub seeds: Seeds,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        self.splat.validate()?;
        self.analysis.validate()
    }
}
