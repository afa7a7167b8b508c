//! Dense layer types with explicit forward/backward passes.
//!
//! Every layer consumes a `batch × features` matrix. Forward passes return a
//! [`LayerCache`] holding whatever the matching backward pass needs; parameter
//! gradients are accumulated into the layer until [`Layer::zero_grad`].

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{Error, Result};

pub const BATCH_NORM_EPS: f64 = 1e-5;
pub const BATCH_NORM_MOMENTUM: f64 = 0.1;
pub const DEFAULT_DROPOUT_RATE: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

/// Per-call forward options.
///
/// `track_stats` controls whether train-mode batch norm folds the batch
/// statistics into its running estimates. `reference_norm` makes train-mode
/// batch norm normalize with the statistics of its most recent batch-statistics
/// pass, held constant, instead of the current batch's. `rng` overrides the
/// dropout layers' own generators so callers can keep independent random
/// streams per pass.
pub struct Pass<'a> {
    pub mode: Mode,
    pub track_stats: bool,
    pub reference_norm: bool,
    pub rng: Option<&'a mut dyn RngCore>,
}

impl<'a> Pass<'a> {
    pub fn train() -> Self {
        Pass {
            mode: Mode::Train,
            track_stats: true,
            reference_norm: false,
            rng: None,
        }
    }

    pub fn eval() -> Self {
        Pass {
            mode: Mode::Eval,
            track_stats: false,
            reference_norm: false,
            rng: None,
        }
    }

    pub fn with_rng(mut self, rng: &'a mut dyn RngCore) -> Self {
        self.rng = Some(rng);
        self
    }

    pub fn without_stats(mut self) -> Self {
        self.track_stats = false;
        self
    }

    /// Train-mode pass that normalizes with the last recorded batch
    /// statistics and leaves running statistics alone.
    pub fn with_reference_norm(mut self) -> Self {
        self.reference_norm = true;
        self.track_stats = false;
        self
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearLayer {
    /// `in_dim × out_dim`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
    #[serde(skip)]
    pub weight_grad: Matrix,
    #[serde(skip)]
    pub bias_grad: Vec<f64>,
}

/// Compares parameters only, not gradient buffers.
impl PartialEq for LinearLayer {
    fn eq(&self, other: &Self) -> bool {
        self.weights == other.weights && self.bias == other.bias
    }
}

impl LinearLayer {
    /// Kaiming-uniform fan-in initialization, zero bias.
    pub fn new<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let bound = (6.0 / in_dim as f64).sqrt();
        let data = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        let weights = Matrix::from_vec(in_dim, out_dim, data).expect("sized above");
        Self::from_parts(weights, vec![0.0; out_dim]).expect("sized above")
    }

    pub fn from_parts(weights: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weights.cols() {
            return Err(Error::shape(
                "LinearLayer",
                format!("bias has {} entries for {} outputs", bias.len(), weights.cols()),
            ));
        }
        Ok(LinearLayer {
            weight_grad: Matrix::zeros(weights.rows(), weights.cols()),
            bias_grad: vec![0.0; bias.len()],
            weights,
            bias,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.cols()
    }

    fn restore_grad_buffers(&mut self) {
        self.weight_grad = Matrix::zeros(self.weights.rows(), self.weights.cols());
        self.bias_grad = vec![0.0; self.bias.len()];
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchNormLayer {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub eps: f64,
    pub momentum: f64,
    #[serde(skip)]
    pub gamma_grad: Vec<f64>,
    #[serde(skip)]
    pub beta_grad: Vec<f64>,
    /// Mean and biased variance of the last batch normalized with its own
    /// statistics.
    #[serde(skip)]
    pub last_batch_stats: Option<(Vec<f64>, Vec<f64>)>,
}

/// Compares parameters and running statistics only.
impl PartialEq for BatchNormLayer {
    fn eq(&self, other: &Self) -> bool {
        self.gamma == other.gamma
            && self.beta == other.beta
            && self.running_mean == other.running_mean
            && self.running_var == other.running_var
            && self.eps == other.eps
            && self.momentum == other.momentum
    }
}

impl BatchNormLayer {
    pub fn new(dim: usize) -> Self {
        BatchNormLayer {
            gamma: vec![1.0; dim],
            beta: vec![0.0; dim],
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
            eps: BATCH_NORM_EPS,
            momentum: BATCH_NORM_MOMENTUM,
            gamma_grad: vec![0.0; dim],
            beta_grad: vec![0.0; dim],
            last_batch_stats: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    fn restore_grad_buffers(&mut self) {
        self.gamma_grad = vec![0.0; self.gamma.len()];
        self.beta_grad = vec![0.0; self.beta.len()];
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DropoutLayer {
    pub rate: f64,
    pub rng_seed: u64,
    #[serde(skip, default = "default_dropout_rng")]
    rng: ChaCha8Rng,
}

fn default_dropout_rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0)
}

impl PartialEq for DropoutLayer {
    fn eq(&self, other: &Self) -> bool {
        self.rate == other.rate && self.rng_seed == other.rng_seed
    }
}

impl DropoutLayer {
    pub fn new(rate: f64, rng_seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1)")));
        }
        Ok(DropoutLayer {
            rate,
            rng_seed,
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
        })
    }

    /// Rewinds the layer's own mask generator to its seed.
    pub fn reseed(&mut self) {
        self.rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
    }
}

/// Identity on the way forward, `−λ·g` on the way back.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradReversalLayer {
    pub lambda: f64,
}

impl GradReversalLayer {
    pub fn new(lambda: f64) -> Result<Self> {
        let mut l = GradReversalLayer { lambda: 0.0 };
        l.set_lambda(lambda)?;
        Ok(l)
    }

    pub fn set_lambda(&mut self, lambda: f64) -> Result<()> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(format!(
                "gradient reversal weight must be finite and ≥ 0, got {lambda}"
            )));
        }
        self.lambda = lambda;
        Ok(())
    }

    pub fn backward(&self, upstream: &Matrix) -> Matrix {
        let factor = -self.lambda;
        upstream.map(|g| factor * g)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layer {
    Linear(LinearLayer),
    BatchNorm(BatchNormLayer),
    Relu,
    Gelu,
    Dropout(DropoutLayer),
    GradReversal(GradReversalLayer),
}

/// Saved activations from one layer's forward pass.
#[derive(Debug, Clone)]
pub enum LayerCache {
    Linear { input: Matrix },
    BatchNormTrain { x_hat: Matrix, inv_std: Vec<f64> },
    /// Normalization with constant statistics (eval or reference passes).
    BatchNormFixed { x_hat: Matrix, inv_std: Vec<f64> },
    Relu { input: Matrix },
    Gelu { input: Matrix },
    Dropout { scale: Option<Vec<f64>> },
    GradReversal,
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Linear(_) => "linear",
            Layer::BatchNorm(_) => "batch_norm",
            Layer::Relu => "relu",
            Layer::Gelu => "gelu",
            Layer::Dropout(_) => "dropout",
            Layer::GradReversal(_) => "grad_reversal",
        }
    }

    /// Output width for a given input width, or a description of the mismatch.
    pub fn output_dim(&self, input_dim: usize) -> std::result::Result<usize, String> {
        match self {
            Layer::Linear(l) if l.in_dim() != input_dim => Err(format!(
                "expects {} input features, got {input_dim}",
                l.in_dim()
            )),
            Layer::Linear(l) => Ok(l.out_dim()),
            Layer::BatchNorm(bn) if bn.dim() != input_dim => Err(format!(
                "expects {} features, got {input_dim}",
                bn.dim()
            )),
            _ => Ok(input_dim),
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, Layer::Linear(_) | Layer::BatchNorm(_))
    }

    pub fn forward(&mut self, input: &Matrix, pass: &mut Pass<'_>) -> Result<(Matrix, LayerCache)> {
        match self {
            Layer::Linear(l) => {
                let mut out = input.matmul(&l.weights)?;
                let cols = out.cols();
                for r in 0..out.rows() {
                    for (v, b) in out.row_mut(r).iter_mut().zip(&l.bias) {
                        *v += b;
                    }
                }
                debug_assert_eq!(cols, l.bias.len());
                Ok((out, LayerCache::Linear { input: input.clone() }))
            }
            Layer::BatchNorm(bn) => batch_norm_forward(bn, input, pass),
            Layer::Relu => Ok((
                input.map(|x| if x > 0.0 { x } else { 0.0 }),
                LayerCache::Relu {
                    input: input.clone(),
                },
            )),
            Layer::Gelu => Ok((
                input.map(gelu),
                LayerCache::Gelu {
                    input: input.clone(),
                },
            )),
            Layer::Dropout(d) => {
                if pass.mode == Mode::Eval || d.rate == 0.0 {
                    return Ok((input.clone(), LayerCache::Dropout { scale: None }));
                }
                let keep = 1.0 - d.rate;
                let scale_kept = 1.0 / keep;
                let n = input.data().len();
                let draw = |rng: &mut dyn RngCore| -> Vec<f64> {
                    (0..n)
                        .map(|_| {
                            if rng.random::<f64>() < keep {
                                scale_kept
                            } else {
                                0.0
                            }
                        })
                        .collect()
                };
                let scale = match pass.rng.as_deref_mut() {
                    Some(rng) => draw(rng),
                    None => draw(&mut d.rng),
                };
                let mut out = input.clone();
                for (v, s) in out.data_mut().iter_mut().zip(&scale) {
                    *v *= s;
                }
                Ok((out, LayerCache::Dropout { scale: Some(scale) }))
            }
            Layer::GradReversal(_) => Ok((input.clone(), LayerCache::GradReversal)),
        }
    }

    /// Propagates `upstream` through the layer, accumulating parameter
    /// gradients, and returns the gradient with respect to the layer input.
    pub fn backward(&mut self, cache: &LayerCache, upstream: &Matrix) -> Result<Matrix> {
        match (self, cache) {
            (Layer::Linear(l), LayerCache::Linear { input }) => {
                let dw = input.t_matmul(upstream)?;
                l.weight_grad.add_assign(&dw)?;
                for r in 0..upstream.rows() {
                    for (bg, g) in l.bias_grad.iter_mut().zip(upstream.row(r)) {
                        *bg += g;
                    }
                }
                upstream.matmul_t(&l.weights)
            }
            (Layer::BatchNorm(bn), LayerCache::BatchNormTrain { x_hat, inv_std }) => {
                batch_norm_backward_train(bn, x_hat, inv_std, upstream)
            }
            (Layer::BatchNorm(bn), LayerCache::BatchNormFixed { x_hat, inv_std }) => {
                upstream.check_same_shape(x_hat, "batch norm backward")?;
                let mut out = upstream.clone();
                for r in 0..out.rows() {
                    let xh = x_hat.row(r);
                    for (j, v) in out.row_mut(r).iter_mut().enumerate() {
                        bn.gamma_grad[j] += *v * xh[j];
                        bn.beta_grad[j] += *v;
                        *v *= bn.gamma[j] * inv_std[j];
                    }
                }
                Ok(out)
            }
            (Layer::Relu, LayerCache::Relu { input }) => {
                let mut out = upstream.clone();
                for (g, &x) in out.data_mut().iter_mut().zip(input.data()) {
                    if x <= 0.0 {
                        *g = 0.0;
                    }
                }
                Ok(out)
            }
            (Layer::Gelu, LayerCache::Gelu { input }) => {
                let mut out = upstream.clone();
                for (g, &x) in out.data_mut().iter_mut().zip(input.data()) {
                    *g *= gelu_grad(x);
                }
                Ok(out)
            }
            (Layer::Dropout(_), LayerCache::Dropout { scale }) => match scale {
                None => Ok(upstream.clone()),
                Some(scale) => {
                    let mut out = upstream.clone();
                    for (g, s) in out.data_mut().iter_mut().zip(scale) {
                        *g *= s;
                    }
                    Ok(out)
                }
            },
            (Layer::GradReversal(grl), LayerCache::GradReversal) => Ok(grl.backward(upstream)),
            (layer, _) => Err(Error::State(format!(
                "cache does not belong to a {} layer",
                layer.kind()
            ))),
        }
    }

    pub fn zero_grad(&mut self) {
        match self {
            Layer::Linear(l) => {
                if l.weight_grad.shape() != l.weights.shape() {
                    l.restore_grad_buffers();
                } else {
                    l.weight_grad.data_mut().fill(0.0);
                    l.bias_grad.fill(0.0);
                }
            }
            Layer::BatchNorm(bn) => {
                if bn.gamma_grad.len() != bn.gamma.len() {
                    bn.restore_grad_buffers();
                } else {
                    bn.gamma_grad.fill(0.0);
                    bn.beta_grad.fill(0.0);
                }
            }
            _ => {}
        }
    }

    /// Called after deserialization to rebuild skipped buffers.
    pub(crate) fn restore(&mut self) {
        match self {
            Layer::Linear(l) => l.restore_grad_buffers(),
            Layer::BatchNorm(bn) => bn.restore_grad_buffers(),
            Layer::Dropout(d) => d.reseed(),
            _ => {}
        }
    }
}

fn batch_norm_forward(
    bn: &mut BatchNormLayer,
    input: &Matrix,
    pass: &Pass<'_>,
) -> Result<(Matrix, LayerCache)> {
    let (n, dim) = input.shape();
    let fixed = |bn: &BatchNormLayer, mean: &[f64], var: &[f64]| {
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + bn.eps).sqrt()).collect();
        let mut x_hat = input.clone();
        let mut out = input.clone();
        for r in 0..n {
            let xh = x_hat.row_mut(r);
            for j in 0..dim {
                xh[j] = (xh[j] - mean[j]) * inv_std[j];
            }
            let xh = x_hat.row(r).to_vec();
            for (j, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = bn.gamma[j] * xh[j] + bn.beta[j];
            }
        }
        (out, LayerCache::BatchNormFixed { x_hat, inv_std })
    };
    match pass.mode {
        Mode::Eval => Ok(fixed(bn, &bn.running_mean, &bn.running_var)),
        Mode::Train if pass.reference_norm => {
            let (mean, var) = bn.last_batch_stats.as_ref().ok_or_else(|| {
                Error::State("reference batch norm before any batch-statistics pass".into())
            })?;
            if mean.len() != dim {
                return Err(Error::shape("batch norm", format!("width {dim} vs {}", mean.len())));
            }
            Ok(fixed(bn, mean, var))
        }
        Mode::Train => {
            if n < 2 {
                return Err(Error::invalid(format!(
                    "train-mode batch norm needs a batch of at least 2 rows, got {n}"
                )));
            }
            let mean = input.col_means();
            let mut var = vec![0.0; dim];
            for row in input.row_iter() {
                for j in 0..dim {
                    let d = row[j] - mean[j];
                    var[j] += d * d;
                }
            }
            var.iter_mut().for_each(|v| *v /= n as f64);
            let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + bn.eps).sqrt()).collect();

            let mut x_hat = input.clone();
            let mut out = Matrix::zeros(n, dim);
            for r in 0..n {
                let xr = x_hat.row_mut(r);
                for j in 0..dim {
                    xr[j] = (xr[j] - mean[j]) * inv_std[j];
                }
                let xr = x_hat.row(r).to_vec();
                for (j, o) in out.row_mut(r).iter_mut().enumerate() {
                    *o = bn.gamma[j] * xr[j] + bn.beta[j];
                }
            }

            bn.last_batch_stats = Some((mean.clone(), var.clone()));
            if pass.track_stats {
                let unbias = n as f64 / (n as f64 - 1.0);
                for j in 0..dim {
                    bn.running_mean[j] =
                        (1.0 - bn.momentum) * bn.running_mean[j] + bn.momentum * mean[j];
                    bn.running_var[j] =
                        (1.0 - bn.momentum) * bn.running_var[j] + bn.momentum * var[j] * unbias;
                }
            }
            Ok((out, LayerCache::BatchNormTrain { x_hat, inv_std }))
        }
    }
}

fn batch_norm_backward_train(
    bn: &mut BatchNormLayer,
    x_hat: &Matrix,
    inv_std: &[f64],
    upstream: &Matrix,
) -> Result<Matrix> {
    upstream.check_same_shape(x_hat, "batch norm backward")?;
    let (n, dim) = upstream.shape();
    let nf = n as f64;

    let mut sum_g = vec![0.0; dim];
    let mut sum_g_xhat = vec![0.0; dim];
    for r in 0..n {
        let g = upstream.row(r);
        let xh = x_hat.row(r);
        for j in 0..dim {
            sum_g[j] += g[j];
            sum_g_xhat[j] += g[j] * xh[j];
        }
    }
    for j in 0..dim {
        bn.gamma_grad[j] += sum_g_xhat[j];
        bn.beta_grad[j] += sum_g[j];
    }

    // dx = γ·inv_std/N · (N·g − Σg − x̂·Σ(g·x̂))
    let mut out = Matrix::zeros(n, dim);
    for r in 0..n {
        let g = upstream.row(r);
        let xh = x_hat.row(r);
        for (j, o) in out.row_mut(r).iter_mut().enumerate() {
            *o = bn.gamma[j] * inv_std[j] / nf * (nf * g[j] - sum_g[j] - xh[j] * sum_g_xhat[j]);
        }
    }
    Ok(out)
}

/// Joint backward for a batch-statistics pass and a second pass normalized
/// with that batch's statistics. The second pass's gradient reaches the first
/// batch's rows through the shared mean and variance.
pub(crate) fn batch_norm_backward_coupled(
    bn: &mut BatchNormLayer,
    (x_hat, inv_std, upstream): (&Matrix, &[f64], &Matrix),
    (ref_x_hat, ref_upstream): (&Matrix, &Matrix),
) -> Result<(Matrix, Matrix)> {
    upstream.check_same_shape(x_hat, "batch norm backward")?;
    ref_upstream.check_same_shape(ref_x_hat, "batch norm backward")?;
    let (n, dim) = upstream.shape();
    let nf = n as f64;

    let mut sum_g = vec![0.0; dim];
    let mut sum_g_xhat = vec![0.0; dim];
    for r in 0..n {
        let (g, xh) = (upstream.row(r), x_hat.row(r));
        for j in 0..dim {
            sum_g[j] += g[j];
            sum_g_xhat[j] += g[j] * xh[j];
        }
    }
    let mut ref_sum_g = vec![0.0; dim];
    let mut ref_sum_g_xhat = vec![0.0; dim];
    for r in 0..ref_upstream.rows() {
        let (g, xh) = (ref_upstream.row(r), ref_x_hat.row(r));
        for j in 0..dim {
            ref_sum_g[j] += g[j];
            ref_sum_g_xhat[j] += g[j] * xh[j];
        }
    }
    for j in 0..dim {
        bn.gamma_grad[j] += sum_g_xhat[j];
        bn.beta_grad[j] += sum_g[j];
    }
    for j in 0..dim {
        bn.gamma_grad[j] += ref_sum_g_xhat[j];
        bn.beta_grad[j] += ref_sum_g[j];
    }

    let mut out = Matrix::zeros(n, dim);
    for r in 0..n {
        let (g, xh) = (upstream.row(r), x_hat.row(r));
        for (j, o) in out.row_mut(r).iter_mut().enumerate() {
            let total_g = sum_g[j] + ref_sum_g[j];
            let total_gx = sum_g_xhat[j] + ref_sum_g_xhat[j];
            *o = bn.gamma[j] * inv_std[j] / nf * (nf * g[j] - total_g - xh[j] * total_gx);
        }
    }
    let mut ref_out = ref_upstream.clone();
    for r in 0..ref_out.rows() {
        for (j, v) in ref_out.row_mut(r).iter_mut().enumerate() {
            *v *= bn.gamma[j] * inv_std[j];
        }
    }
    Ok((out, ref_out))
}

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal CDF via `erf`.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

/// Exact GeLU, `x·Φ(x)`.
#[inline]
pub fn gelu(x: f64) -> f64 {
    x * normal_cdf(x)
}

#[inline]
pub fn gelu_grad(x: f64) -> f64 {
    normal_cdf(x) + x * FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}
