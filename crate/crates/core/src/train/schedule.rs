use serde::{Deserialize, Serialize};

pub const DEFAULT_GAMMA: f64 = 10.0;

/// Adversarial weight at training progress `p`: `2/(1+e^(−γp)) − 1`.
///
/// Progress outside `[0, 1]` is clamped with a warning.
pub fn lambda_at(p: f64, gamma: f64) -> f64 {
    let p = if (0.0..=1.0).contains(&p) {
        p
    } else {
        log::warn!("training progress {p} outside [0, 1]; clamping");
        if p.is_nan() {
            0.0
        } else {
            p.clamp(0.0, 1.0)
        }
    };
    2.0 / (1.0 + (-gamma * p).exp()) - 1.0
}

/// How the reversal weight evolves over a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaSchedule {
    Sigmoid { gamma: f64 },
    /// A fixed weight for the whole run; 0 reduces the objective to the label loss.
    Constant { value: f64 },
}

impl LambdaSchedule {
    pub fn at(&self, p: f64) -> f64 {
        match *self {
            LambdaSchedule::Sigmoid { gamma } => lambda_at(p, gamma),
            LambdaSchedule::Constant { value } => value,
        }
    }
}

impl Default for LambdaSchedule {
    fn default() -> Self {
        LambdaSchedule::Sigmoid {
            gamma: DEFAULT_GAMMA,
        }
    }
}
