//! The run configuration file: one TOML document with `[model]`, `[data]`,
//! `[train]` and `[eval]` tables. Every key is optional; unknown keys are
//! rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{DegradationRegistry, DegradationSpec};
use crate::metrics::EvalProtocol;
use crate::train::TrainConfig;
use crate::{Error, ModelConfig, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// HR training sequences, one directory of PNG frames per sequence.
    pub train_root: Option<PathBuf>,
    /// Pre-degraded LR frames mirroring `train_root`; degraded on the fly
    /// when unset.
    pub train_lr_root: Option<PathBuf>,
    pub eval_root: Option<PathBuf>,
    pub eval_lr_root: Option<PathBuf>,
    /// `bi` or `bd`.
    pub degradation: String,
    /// Gaussian standard deviation of `bd`, HR pixels.
    pub sigma: f64,
    /// Decimation offset of `bd`.
    pub phase: usize,
    /// Random horizontal flips and temporal reversal of training patches; off by default.
    pub augment: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        let d = DegradationSpec::default();
        Self {
            train_root: None,
            train_lr_root: None,
            eval_root: None,
            eval_lr_root: None,
            degradation: d.mode,
            sigma: d.sigma,
            phase: d.phase,
            augment: false,
        }
    }
}

impl DataConfig {
    pub fn degradation_spec(&self, scale: usize) -> DegradationSpec {
        DegradationSpec { mode: self.degradation.clone(), scale, sigma: self.sigma, phase: self.phase }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub data: DataConfig,
    pub train: TrainConfig,
    pub eval: EvalProtocol,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        DegradationRegistry::default().build(&self.data.degradation_spec(self.model.scale))?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration serializes")
    }

    /// The effective configuration as written into run directories, with
    /// derived quantities appended as comments.
    pub fn echo(&self) -> String {
        format!(
            "{}\n# derived\n# frames = {}\n# input_frames = {}\n",
            self.to_toml(),
            self.model.frames(),
            self.model.input_frames()
        )
    }
}
