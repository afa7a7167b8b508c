use serde::{Deserialize, Serialize};

use super::stack::{LayerStack, ParamSlot};
use crate::error::{Error, Result};

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update to an explicit list of parameter tensors.
    ///
    /// The first call fixes the parameter layout; later calls must pass
    /// tensors of the same count and sizes.
    pub fn step_params(&mut self, params: Vec<ParamSlot<'_>>) -> Result<()> {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
            self.v = self.m.clone();
        }
        if params.len() != self.m.len()
            || params.iter().zip(&self.m).any(|(p, m)| p.value.len() != m.len())
        {
            return Err(Error::State(
                "parameter layout changed between optimizer steps".into(),
            ));
        }
        for p in &params {
            if p.grad.len() != p.value.len() {
                return Err(Error::State("gradient buffer does not match parameter".into()));
            }
        }

        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((p, m), v) in params.into_iter().zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.value.len() {
                let g = p.grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p.value[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }

    /// One update over every trainable tensor of the given stacks, in order.
    /// Each stack must have populated gradients.
    pub fn step(&mut self, stacks: &mut [&mut LayerStack]) -> Result<()> {
        let mut params = Vec::new();
        for stack in stacks.iter_mut() {
            params.extend(stack.params()?);
        }
        self.step_params(params)
    }
}
