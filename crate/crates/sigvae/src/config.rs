//! Run configuration: one TOML file with `[data]`, `[model]`, `[loss]`,
//! `[train]` and `[two_stage]` tables. Every key is optional; unknown keys
//! are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sigvae_core::config::{LossConfig, ModelConfig, TrainConfig, TwoStageConfig};

use crate::error::{Error, Result};
use crate::io;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Dataset spec, see [`crate::datasets::DatasetSpec`].
    pub dataset: String,
    /// Seed for synthetic generators.
    pub generator_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { dataset: "swiss-roll".into(), generator_seed: 0 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub two_stage: TwoStageConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        toml::from_str(&io::read(path)?).map_err(|e| Error::format(path, e.to_string()))
    }

    /// Short label such as `sigvae/bernoulli-poisson` or `vgae/inner-product+two-stage`.
    pub fn variant(&self) -> String {
        let mut s = format!("{}/{}", serialized_name(&self.model.encoder), serialized_name(&self.model.decoder));
        if self.two_stage.enabled {
            s.push_str(if self.two_stage.skip_stage1 { "+stage2-only" } else { "+two-stage" });
        }
        s
    }
}

/// The serde name of a unit enum variant.
pub fn serialized_name<T: Serialize>(value: &T) -> String {
    serde_json::to_value(value).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}
