use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ranker::DEFAULT_GAMMA;
use crate::rnn::TrainConfig;

/// Every tunable of the pipeline. Output artifacts embed the resolved value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// HOOF orientation bins.
    pub bins: usize,
    /// Side of the spatial pyramid grid.
    pub pyramid: usize,
    pub hidden: usize,
    /// Weight of the semantic stream when fusing probabilities.
    pub lambda: f64,
    /// Weight of the activity-dynamics term in the ranking objective.
    pub gamma: f64,
    #[serde(flatten)]
    pub train: TrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            bins: 10,
            pyramid: 3,
            hidden: 100,
            lambda: 0.5,
            gamma: DEFAULT_GAMMA,
            train: TrainConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bins == 0 || self.pyramid == 0 || self.hidden == 0 {
            return Err(Error::invalid("bins, pyramid and hidden must be positive"));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::invalid(format!(
                "lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::invalid(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        self.train.validate()
    }

    pub fn motion_dim(&self) -> usize {
        crate::features::motion_dim(self.bins, self.pyramid)
    }
}
