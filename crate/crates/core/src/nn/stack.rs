use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::layers::{batch_norm_backward_coupled, Layer, LayerCache, Pass};
use super::matrix::Matrix;
use crate::error::{Error, Result};

static NEXT_STACK_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_STACK_ID.fetch_add(1, Ordering::Relaxed)
}

/// A sequential stack of layers with a declared input width.
#[derive(Debug, Serialize, Deserialize)]
pub struct LayerStack {
    input_dim: usize,
    layers: Vec<Layer>,
    #[serde(skip, default = "fresh_id")]
    id: u64,
    #[serde(skip)]
    grads_ready: bool,
}

impl Clone for LayerStack {
    fn clone(&self) -> Self {
        LayerStack {
            input_dim: self.input_dim,
            layers: self.layers.clone(),
            id: fresh_id(),
            grads_ready: self.grads_ready,
        }
    }
}

impl PartialEq for LayerStack {
    fn eq(&self, other: &Self) -> bool {
        self.input_dim == other.input_dim && self.layers == other.layers
    }
}

/// Everything a backward pass needs from the matching forward pass.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    stack_id: u64,
    output_shape: (usize, usize),
    layers: Vec<LayerCache>,
}

/// One trainable tensor and its accumulated gradient.
pub struct ParamSlot<'a> {
    pub value: &'a mut [f64],
    pub grad: &'a [f64],
}

impl LayerStack {
    pub fn new(input_dim: usize, layers: Vec<Layer>) -> Result<Self> {
        let stack = LayerStack {
            input_dim,
            layers,
            id: fresh_id(),
            grads_ready: false,
        };
        stack.output_dim()?;
        Ok(stack)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Output width; fails with the first layer whose shape does not chain.
    pub fn output_dim(&self) -> Result<usize> {
        let mut dim = self.input_dim;
        for (i, layer) in self.layers.iter().enumerate() {
            dim = layer
                .output_dim(dim)
                .map_err(|e| Error::shape(format!("layer {i} ({})", layer.kind()), e))?;
        }
        Ok(dim)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn forward(&mut self, input: &Matrix, pass: &mut Pass<'_>) -> Result<(Matrix, ForwardCache)> {
        if input.cols() != self.input_dim {
            return Err(Error::shape(
                "layer 0 (input)",
                format!(
                    "stack expects {} input features, got {}",
                    self.input_dim,
                    input.cols()
                ),
            ));
        }
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            if let Err(e) = layer.output_dim(x.cols()) {
                return Err(Error::shape(format!("layer {i} ({})", layer.kind()), e));
            }
            let (y, cache) = layer.forward(&x, pass)?;
            if !y.is_finite() {
                return Err(Error::State(format!(
                    "non-finite activation after layer {i} ({})",
                    layer.kind()
                )));
            }
            caches.push(cache);
            x = y;
        }
        let cache = ForwardCache {
            stack_id: self.id,
            output_shape: x.shape(),
            layers: caches,
        };
        Ok((x, cache))
    }

    /// Forward in eval mode, discarding the cache.
    pub fn infer(&mut self, input: &Matrix) -> Result<Matrix> {
        Ok(self.forward(input, &mut Pass::eval())?.0)
    }

    /// Backpropagates `upstream`, accumulating parameter gradients, and
    /// returns the gradient with respect to the stack input.
    pub fn backward(&mut self, cache: &ForwardCache, upstream: &Matrix) -> Result<Matrix> {
        if cache.stack_id != self.id || cache.layers.len() != self.layers.len() {
            return Err(Error::State(
                "backward called without a matching forward pass on this stack".into(),
            ));
        }
        if upstream.shape() != cache.output_shape {
            return Err(Error::shape(
                "backward upstream",
                format!(
                    "expected {:?}, got {:?}",
                    cache.output_shape,
                    upstream.shape()
                ),
            ));
        }
        let mut g = upstream.clone();
        for (i, (layer, lc)) in self.layers.iter_mut().zip(&cache.layers).enumerate().rev() {
            g = layer.backward(lc, &g)?;
            if !g.is_finite() {
                return Err(Error::State(format!(
                    "non-finite gradient at layer {i} ({})",
                    layer.kind()
                )));
            }
        }
        self.grads_ready = true;
        Ok(g)
    }

    /// Backward through two passes of the same step, where `reference` was run
    /// with reference normalization against `primary`'s batch statistics.
    /// Returns the input gradients of both passes.
    pub fn backward_paired(
        &mut self,
        (cache, upstream): (&ForwardCache, &Matrix),
        (ref_cache, ref_upstream): (&ForwardCache, &Matrix),
    ) -> Result<(Matrix, Matrix)> {
        for (c, u) in [(cache, upstream), (ref_cache, ref_upstream)] {
            if c.stack_id != self.id || c.layers.len() != self.layers.len() {
                return Err(Error::State(
                    "backward called without a matching forward pass on this stack".into(),
                ));
            }
            if u.shape() != c.output_shape {
                return Err(Error::shape(
                    "backward upstream",
                    format!("expected {:?}, got {:?}", c.output_shape, u.shape()),
                ));
            }
        }
        let mut g = upstream.clone();
        let mut rg = ref_upstream.clone();
        let layers = self.layers.iter_mut().zip(cache.layers.iter().zip(&ref_cache.layers));
        for (i, (layer, (lc, rc))) in layers.enumerate().rev() {
            let kind = layer.kind();
            match (layer, lc, rc) {
                (
                    Layer::BatchNorm(bn),
                    LayerCache::BatchNormTrain { x_hat, inv_std },
                    LayerCache::BatchNormFixed { x_hat: ref_x_hat, .. },
                ) => {
                    (g, rg) = batch_norm_backward_coupled(
                        bn,
                        (x_hat, inv_std, &g),
                        (ref_x_hat, &rg),
                    )?;
                }
                (layer, lc, rc) => {
                    g = layer.backward(lc, &g)?;
                    rg = layer.backward(rc, &rg)?;
                }
            }
            if !g.is_finite() || !rg.is_finite() {
                return Err(Error::State(format!(
                    "non-finite gradient at layer {i} ({kind})"
                )));
            }
        }
        self.grads_ready = true;
        Ok((g, rg))
    }

    pub fn zero_grad(&mut self) {
        for layer in &mut self.layers {
            layer.zero_grad();
        }
        self.grads_ready = false;
    }

    /// True when a backward pass has populated gradients since the last
    /// [`zero_grad`](Self::zero_grad).
    pub fn grads_ready(&self) -> bool {
        self.grads_ready
    }

    pub fn has_params(&self) -> bool {
        self.layers.iter().any(Layer::has_params)
    }

    /// Trainable tensors in a fixed order (per layer: weights, bias / gamma, beta).
    pub fn params(&mut self) -> Result<Vec<ParamSlot<'_>>> {
        if !self.grads_ready {
            return Err(Error::State(
                "optimizer step requested before a backward pass populated gradients".into(),
            ));
        }
        Ok(self.params_unchecked())
    }

    pub(crate) fn params_unchecked(&mut self) -> Vec<ParamSlot<'_>> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Linear(l) => {
                    out.push(ParamSlot {
                        value: l.weights.data_mut(),
                        grad: l.weight_grad.data(),
                    });
                    out.push(ParamSlot {
                        value: &mut l.bias,
                        grad: &l.bias_grad,
                    });
                }
                Layer::BatchNorm(bn) => {
                    out.push(ParamSlot {
                        value: &mut bn.gamma,
                        grad: &bn.gamma_grad,
                    });
                    out.push(ParamSlot {
                        value: &mut bn.beta,
                        grad: &bn.beta_grad,
                    });
                }
                _ => {}
            }
        }
        out
    }

    /// Flattened copy of all trainable values, in [`params`](Self::params) order.
    pub fn flat_params(&mut self) -> Vec<f64> {
        self.params_unchecked()
            .into_iter()
            .flat_map(|p| p.value.to_vec())
            .collect()
    }

    /// Flattened copy of all accumulated gradients.
    pub fn flat_grads(&mut self) -> Vec<f64> {
        self.params_unchecked()
            .into_iter()
            .flat_map(|p| p.grad.to_vec())
            .collect()
    }

    pub fn num_params(&mut self) -> usize {
        self.params_unchecked().iter().map(|p| p.value.len()).sum()
    }

    /// Sets the weight of every gradient-reversal layer in the stack.
    pub fn set_reversal_lambda(&mut self, lambda: f64) -> Result<()> {
        for layer in &mut self.layers {
            if let Layer::GradReversal(grl) = layer {
                grl.set_lambda(lambda)?;
            }
        }
        Ok(())
    }

    /// Rebuilds buffers not stored in checkpoints.
    pub(crate) fn restore(&mut self) {
        for layer in &mut self.layers {
            layer.restore();
        }
        self.grads_ready = false;
    }
}
