use serde::{Deserialize, Serialize};

use super::schedule::{LambdaSchedule, DEFAULT_GAMMA};
use crate::error::{Error, Result};
use crate::nn::layers::DEFAULT_DROPOUT_RATE;

/// Which accuracy drives early stopping and best-checkpoint selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EarlyStop {
    /// Labeled target evaluation split.
    #[default]
    TargetVal,
    SourceVal,
    /// Train every epoch and keep the final parameters.
    Off,
}

impl std::str::FromStr for EarlyStop {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "target_val" => Ok(EarlyStop::TargetVal),
            "source_val" => Ok(EarlyStop::SourceVal),
            "off" => Ok(EarlyStop::Off),
            _ => Err(Error::invalid(format!(
                "early stop mode {s:?} (valid: target_val, source_val, off)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lambda_gamma: f64,
    /// Overrides the sigmoid ramp with a constant reversal weight.
    pub lambda_fixed: Option<f64>,
    pub early_stop: EarlyStop,
    pub patience: usize,
    pub dropout: f64,
    /// Domain-head learning rate as a multiple of `lr`.
    pub domain_lr_scale: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            batch_size: 128,
            epochs: 50,
            lambda_gamma: DEFAULT_GAMMA,
            lambda_fixed: None,
            early_stop: EarlyStop::TargetVal,
            patience: 10,
            dropout: DEFAULT_DROPOUT_RATE,
            domain_lr_scale: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn schedule(&self) -> LambdaSchedule {
        match self.lambda_fixed {
            Some(value) => LambdaSchedule::Constant { value },
            None => LambdaSchedule::Sigmoid {
                gamma: self.lambda_gamma,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be finite and >= 0", self.lr)));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch size must be at least 2 (batch norm)".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.lambda_gamma > 0.0 && self.lambda_gamma.is_finite()) {
            return Err(Error::Config("lambda gamma must be finite and > 0".into()));
        }
        if let Some(v) = self.lambda_fixed {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config("fixed lambda must be finite and >= 0".into()));
            }
        }
        if !(self.domain_lr_scale > 0.0 && self.domain_lr_scale.is_finite()) {
            return Err(Error::Config("domain lr scale must be finite and > 0".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}
