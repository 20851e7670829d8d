//! Run configuration, read from JSON. Absent fields take their defaults;
//! unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::SynthConfig;
use crate::error::{Error, Result};
use crate::training::AdamHyper;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Sparse GP with a pretrained network mean.
    Proposed,
    /// Sparse GP with zero mean.
    Gp,
    /// Network with a constant predictive variance.
    Nn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Proposed, ModelKind::Gp, ModelKind::Nn];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Proposed => "proposed",
            ModelKind::Gp => "gp",
            ModelKind::Nn => "nn",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpConfig {
    pub hidden: usize,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig { hidden: 5 }
    }
}

/// Initial kernel parameters; `None` means `alpha0 = 1`, `gamma0 = 1 / D`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelConfig {
    pub alpha0: Option<f64>,
    pub gamma0: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InducingConfig {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "optimize_Z")]
    pub optimize_z: bool,
}

impl Default for InducingConfig {
    fn default() -> Self {
        InducingConfig {
            m: 100,
            optimize_z: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub mlp: MlpConfig,
    pub kernel: KernelConfig,
    pub inducing: InducingConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: ModelKind::Proposed,
            mlp: MlpConfig::default(),
            kernel: KernelConfig::default(),
            inducing: InducingConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        let h = AdamHyper::default();
        AdamConfig {
            lr: h.lr,
            beta1: h.beta1,
            beta2: h.beta2,
            eps: h.eps,
        }
    }
}

impl AdamConfig {
    pub fn hyper(&self) -> AdamHyper {
        AdamHyper {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub minibatch: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub adam: AdamConfig,
    pub pretrain_epochs: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            minibatch: 64,
            max_epochs: 500,
            patience: 20,
            adam: AdamConfig::default(),
            pretrain_epochs: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub path: Option<String>,
    pub synthetic: Option<SynthConfig>,
    pub target: Option<String>,
    /// `[latitude, longitude]` column names.
    pub location_columns: Option<[String; 2]>,
    pub test_location_fraction: f64,
    pub valid_fraction: f64,
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            path: None,
            synthetic: None,
            target: None,
            location_columns: None,
            test_location_fraction: 0.2,
            valid_fraction: 0.1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub training: TrainingConfig,
    pub data: DataConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.training;
        if t.minibatch == 0 {
            return Err(Error::Config("training.minibatch must be positive".into()));
        }
        if !(t.adam.lr > 0.0) {
            return Err(Error::Config("training.adam.lr must be positive".into()));
        }
        if self.model.inducing.m == 0 {
            return Err(Error::Config("model.inducing.M must be positive".into()));
        }
        if self.model.mlp.hidden == 0 {
            return Err(Error::Config("model.mlp.hidden must be positive".into()));
        }
        let f = self.data.test_location_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::Config("data.test_location_fraction must be in (0, 1)".into()));
        }
        let v = self.data.valid_fraction;
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::Config("data.valid_fraction must be in (0, 1)".into()));
        }
        for (name, v) in [("alpha0", self.model.kernel.alpha0), ("gamma0", self.model.kernel.gamma0)] {
            if let Some(v) = v {
                if !(v > 0.0) {
                    return Err(Error::Config(format!("model.kernel.{name} must be positive")));
                }
            }
        }
        Ok(())
    }
}
