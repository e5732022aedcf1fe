//! Run configuration, read from TOML with every key defaulted.
//!
//! ```toml
//! [dataset]
//! seed = 1
//! samples = 5000
//! atoms_min = 2
//! atoms_max = 8
//!
//! [grid]
//! bins = 128
//! sigma_multiplier = 0.75
//! # lo = -0.05   # optional; default covers [min - 3 sigma, max + 3 sigma]
//! # hi = 0.5
//!
//! [loss]
//! temperature = 2.0
//!
//! [optimizer]
//! learning_rate = 1e-3
//! total_steps = 5000
//!
//! [model]
//! hidden = 128
//!
//! [run]
//! mode = "hl_gauss"
//! eval_interval = 100
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::LossConfig;
use crate::model::OptimizerConfig;
use crate::toy::DatasetSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "baseline_mae", alias = "baseline")]
    Baseline,
    #[serde(rename = "hl_gauss", alias = "hlgauss")]
    HlGauss,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Baseline => "baseline_mae",
            Mode::HlGauss => "hl_gauss",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub bins: usize,
    pub sigma_multiplier: f64,
    /// Explicit support; both or neither must be set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            bins: 128,
            sigma_multiplier: 0.75,
            lo: None,
            hi: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSpec {
    pub hidden: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self { hidden: 128 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSpec {
    pub mode: Mode,
    /// Seeds parameter initialization and batch order.
    pub seed: u64,
    pub eval_interval: usize,
    /// Size of the fixed held-out batch used for per-step metrics.
    pub eval_batch: usize,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            mode: Mode::HlGauss,
            seed: 0,
            eval_interval: 100,
            eval_batch: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dataset: DatasetSpec,
    pub grid: GridSpec,
    pub loss: LossConfig,
    pub optimizer: OptimizerConfig,
    pub model: ModelSpec,
    pub run: RunSpec,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("config: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.loss.validate()?;
        self.optimizer.validate()?;
        if self.model.hidden == 0 {
            return Err(Error::InvalidArgument(
                "hidden width must be positive".into(),
            ));
        }
        if self.run.eval_interval == 0 || self.run.eval_batch == 0 {
            return Err(Error::InvalidArgument(
                "eval interval and eval batch must be positive".into(),
            ));
        }
        if self.run.mode == Mode::HlGauss {
            let g = &self.grid;
            if g.bins < 2 {
                return Err(Error::InvalidArgument(format!(
                    "hl_gauss mode needs at least 2 bins, got {}",
                    g.bins
                )));
            }
            if !(g.sigma_multiplier > 0.0) || !g.sigma_multiplier.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "sigma multiplier must be positive, got {}",
                    g.sigma_multiplier
                )));
            }
            match (g.lo, g.hi) {
                (Some(lo), Some(hi)) if !(hi > lo) => {
                    return Err(Error::InvalidArgument(format!("grid hi {hi} <= lo {lo}")))
                }
                (Some(_), None) | (None, Some(_)) => {
                    return Err(Error::InvalidArgument(
                        "grid lo and hi must be given together".into(),
                    ))
                }
                _ => {}
            }
        }
        Ok(())
    }
}
