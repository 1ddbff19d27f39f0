//! One TOML file holding every stage's parameters. Missing sections and keys
//! take their defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::HoofParams;
use crate::network::{AdamConfig, Architecture, TrainConfig};
use crate::optflow::FlowParams;
use crate::preprocess::{RoiParams, WindowParams};
use crate::spotting::DEFAULT_THRESHOLD;

/// Parameters that determine the feature cache contents.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureParams {
    pub window: WindowParams,
    pub roi: RoiParams,
    pub flow: FlowParams,
    pub hoof: HoofParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpottingParams {
    pub threshold: f64,
}

impl Default for SpottingParams {
    fn default() -> Self {
        SpottingParams {
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceParams {
    pub port: u16,
    pub data_dir: PathBuf,
    /// Sample weight given to windows an annotator rejected.
    pub hard_negative_weight: f64,
}

impl Default for ServiceParams {
    fn default() -> Self {
        ServiceParams {
            port: 8080,
            data_dir: PathBuf::from("microspot-data"),
            hard_negative_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(flatten)]
    pub features: FeatureParams,
    pub network: Architecture,
    pub adam: AdamConfig,
    pub train: TrainConfig,
    pub spotting: SpottingParams,
    pub service: ServiceParams,
}

impl PipelineConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let config: PipelineConfig =
            toml::from_str(text).map_err(|e| Error::format("config", path, e.message()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    /// Checks everything that does not depend on a video's frame rate.
    pub fn validate(&self) -> Result<()> {
        let w = &self.features.window;
        if !(w.window_seconds > 0.0
            && w.overlap_seconds >= 0.0
            && w.overlap_seconds < w.window_seconds)
        {
            return Err(Error::Validation(format!(
                "window {w:?}: need 0 ≤ overlap < window"
            )));
        }
        let r = &self.features.roi;
        if !(r.brow_margin >= 0.0 && r.mouth_box_side > 0.0) {
            return Err(Error::Validation(format!("roi {r:?}")));
        }
        self.features.flow.validate()?;
        if self.features.hoof.bins < 2 || !(self.features.hoof.min_magnitude >= 0.0) {
            return Err(Error::Validation(format!("hoof {:?}", self.features.hoof)));
        }
        let a = &self.network;
        if a.input_dim != self.features.hoof.dims() {
            return Err(Error::Validation(format!(
                "network input_dim {} does not match {} HOOF dims",
                a.input_dim,
                self.features.hoof.dims()
            )));
        }
        if a.hidden == 0 || a.layers == 0 {
            return Err(Error::Validation(format!("network {a:?}")));
        }
        self.adam.validate()?;
        if self.train.epochs == 0 || self.train.batch_size == 0 {
            return Err(Error::Validation(format!("train {:?}", self.train)));
        }
        if !(0.0..=1.0).contains(&self.spotting.threshold) {
            return Err(Error::Validation(format!(
                "threshold {}",
                self.spotting.threshold
            )));
        }
        if !(self.service.hard_negative_weight >= 0.0) {
            return Err(Error::Validation(
                "hard_negative_weight must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}
