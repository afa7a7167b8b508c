//! The two classifiers: a supervised MLP baseline and the domain-adversarial
//! network with a label head and a gradient-reversed domain head.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::domain::NUM_CLASSES;
use crate::error::{Error, Result};
use crate::nn::layers::DEFAULT_DROPOUT_RATE;
use crate::nn::{
    ArchitectureTag, BatchNormLayer, Checkpoint, DropoutLayer, ForwardCache, GradReversalLayer,
    Layer, LayerStack, LinearLayer, Matrix, Pass,
};

pub const BASELINE_KIND: &str = "baseline_mlp";
pub const DANN_KIND: &str = "dann";
/// Width of the representation both models expose for probes and embeddings.
pub const FEATURE_DIM: usize = 128;
pub const HEAD_HIDDEN: usize = 64;
pub const NUM_DOMAINS: usize = 2;

const BASELINE_WIDTHS: [usize; 2] = [256, 128];
const EXTRACTOR_WIDTHS: [usize; 3] = [512, 256, 128];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Activation {
    Relu,
    Gelu,
}

/// Linear → BatchNorm → activation → Dropout blocks.
fn dense_blocks(
    input_dim: usize,
    widths: &[usize],
    act: Activation,
    dropout: f64,
    rng: &mut ChaCha8Rng,
    dropout_seed: u64,
) -> Result<LayerStack> {
    let mut layers = Vec::new();
    let mut d = input_dim;
    for (i, &w) in widths.iter().enumerate() {
        layers.push(Layer::Linear(LinearLayer::new(d, w, rng)));
        layers.push(Layer::BatchNorm(BatchNormLayer::new(w)));
        layers.push(match act {
            Activation::Relu => Layer::Relu,
            Activation::Gelu => Layer::Gelu,
        });
        layers.push(Layer::Dropout(DropoutLayer::new(
            dropout,
            dropout_seed.wrapping_add(i as u64),
        )?));
        d = w;
    }
    LayerStack::new(input_dim, layers)
}

/// `[GRL →] Linear(64) → ReLU → Linear(out)`.
fn head(out: usize, reversal: bool, rng: &mut ChaCha8Rng) -> Result<LayerStack> {
    let mut layers = Vec::new();
    if reversal {
        layers.push(Layer::GradReversal(GradReversalLayer::new(0.0)?));
    }
    layers.push(Layer::Linear(LinearLayer::new(FEATURE_DIM, HEAD_HIDDEN, rng)));
    layers.push(Layer::Relu);
    layers.push(Layer::Linear(LinearLayer::new(HEAD_HIDDEN, out, rng)));
    LayerStack::new(FEATURE_DIM, layers)
}

fn check_input_dim(d: usize) -> Result<()> {
    if d < 1 {
        return Err(Error::invalid("model input width must be at least 1"));
    }
    Ok(())
}

fn init_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(30);
    rng
}

/// A network with a shared representation trunk and a 5-way label head.
///
/// Training and evaluation code is written against this trait so the same
/// loop can drive either model's label path.
pub trait Classifier {
    fn trunk(&self) -> &LayerStack;
    /// Mutable access to the trunk and the label head at once.
    fn label_path_mut(&mut self) -> (&mut LayerStack, &mut LayerStack);

    fn input_dim(&self) -> usize {
        self.trunk().input_dim()
    }

    /// Representation rows (eval mode), one per input row.
    fn extract_features(&mut self, x: &Matrix) -> Result<Matrix> {
        self.label_path_mut().0.infer(x)
    }

    /// Label logits in eval mode.
    fn label_logits(&mut self, x: &Matrix) -> Result<Matrix> {
        let (trunk, head) = self.label_path_mut();
        let f = trunk.infer(x)?;
        head.infer(&f)
    }

    fn predict(&mut self, x: &Matrix) -> Result<Vec<usize>> {
        Ok(self.label_logits(x)?.argmax_rows())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineMlp {
    pub trunk: LayerStack,
    pub head: LayerStack,
    pub dropout_rate: f64,
}

pub fn build_baseline(d: usize, seed: u64) -> Result<BaselineMlp> {
    build_baseline_with(d, seed, DEFAULT_DROPOUT_RATE)
}

pub fn build_baseline_with(d: usize, seed: u64, dropout: f64) -> Result<BaselineMlp> {
    check_input_dim(d)?;
    let mut rng = init_rng(seed);
    let trunk = dense_blocks(d, &BASELINE_WIDTHS, Activation::Relu, dropout, &mut rng, seed)?;
    let head = LayerStack::new(
        FEATURE_DIM,
        vec![Layer::Linear(LinearLayer::new(FEATURE_DIM, NUM_CLASSES, &mut rng))],
    )?;
    Ok(BaselineMlp {
        trunk,
        head,
        dropout_rate: dropout,
    })
}

impl Classifier for BaselineMlp {
    fn trunk(&self) -> &LayerStack {
        &self.trunk
    }

    fn label_path_mut(&mut self) -> (&mut LayerStack, &mut LayerStack) {
        (&mut self.trunk, &mut self.head)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DannModel {
    pub extractor: LayerStack,
    pub label_head: LayerStack,
    /// Starts with the gradient-reversal layer.
    pub domain_head: LayerStack,
    pub dropout_rate: f64,
}

pub fn build_dann(d: usize, seed: u64) -> Result<DannModel> {
    build_dann_with(d, seed, DEFAULT_DROPOUT_RATE)
}

pub fn build_dann_with(d: usize, seed: u64, dropout: f64) -> Result<DannModel> {
    check_input_dim(d)?;
    let mut rng = init_rng(seed);
    let extractor = dense_blocks(d, &EXTRACTOR_WIDTHS, Activation::Gelu, dropout, &mut rng, seed)?;
    let label_head = head(NUM_CLASSES, false, &mut rng)?;
    let domain_head = head(NUM_DOMAINS, true, &mut rng)?;
    Ok(DannModel {
        extractor,
        label_head,
        domain_head,
        dropout_rate: dropout,
    })
}

impl Classifier for DannModel {
    fn trunk(&self) -> &LayerStack {
        &self.extractor
    }

    fn label_path_mut(&mut self) -> (&mut LayerStack, &mut LayerStack) {
        (&mut self.extractor, &mut self.label_head)
    }
}

/// Outputs of one DANN forward pass plus what backward needs.
#[derive(Debug, Clone)]
pub struct DannOutput {
    pub features: Matrix,
    pub label_logits: Matrix,
    pub domain_logits: Matrix,
    pub extractor_cache: ForwardCache,
    pub label_cache: ForwardCache,
    pub domain_cache: ForwardCache,
}

/// Runs the extractor once and both heads on the same features. `lambda` is
/// stored in the reversal layer for the following backward pass.
pub fn dann_forward(
    model: &mut DannModel,
    batch: &Matrix,
    pass: &mut Pass<'_>,
    lambda: f64,
) -> Result<DannOutput> {
    model.domain_head.set_reversal_lambda(lambda)?;
    let (features, extractor_cache) = model.extractor.forward(batch, pass)?;
    let (label_logits, label_cache) = model.label_head.forward(&features, pass)?;
    let (domain_logits, domain_cache) = model.domain_head.forward(&features, pass)?;
    Ok(DannOutput {
        features,
        label_logits,
        domain_logits,
        extractor_cache,
        label_cache,
        domain_cache,
    })
}

/// Backpropagates loss gradients on either head's logits into the heads and
/// then, summed at the feature layer, into the extractor. Gradients accumulate
/// on top of whatever the stacks already hold.
pub fn dann_backward(
    model: &mut DannModel,
    out: &DannOutput,
    label_grad: Option<&Matrix>,
    domain_grad: Option<&Matrix>,
) -> Result<()> {
    let mut feature_grad: Option<Matrix> = None;
    if let Some(g) = label_grad {
        feature_grad = Some(model.label_head.backward(&out.label_cache, g)?);
    }
    if let Some(g) = domain_grad {
        let gd = model.domain_head.backward(&out.domain_cache, g)?;
        feature_grad = Some(match feature_grad {
            Some(mut acc) => {
                acc.add_assign(&gd)?;
                acc
            }
            None => gd,
        });
    }
    if let Some(g) = feature_grad {
        model.extractor.backward(&out.extractor_cache, &g)?;
    }
    Ok(())
}

/// Layer kinds and output widths, used to compare a loaded stack with the
/// architecture it claims to be.
fn signature(stack: &LayerStack) -> Vec<(&'static str, usize)> {
    let mut d = stack.input_dim();
    stack
        .layers()
        .iter()
        .map(|l| {
            d = l.output_dim(d).unwrap_or(0);
            (l.kind(), d)
        })
        .collect()
}

fn expect_same(name: &str, got: &LayerStack, want: &LayerStack) -> Result<()> {
    if got.input_dim() != want.input_dim() || signature(got) != signature(want) {
        return Err(Error::Checkpoint(format!(
            "stack {name:?} does not match the declared architecture"
        )));
    }
    Ok(())
}

fn expect_kind(ckpt: &Checkpoint, kind: &str) -> Result<()> {
    if ckpt.architecture.kind != kind {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds a {:?} model, expected {kind:?}",
            ckpt.architecture.kind
        )));
    }
    Ok(())
}

impl BaselineMlp {
    pub fn to_checkpoint(&self, feature_names: &[String]) -> Checkpoint {
        Checkpoint::new(
            ArchitectureTag {
                kind: BASELINE_KIND.into(),
                input_dim: self.trunk.input_dim(),
                dropout_rate: Some(self.dropout_rate),
                feature_names: feature_names.to_vec(),
            },
            vec![("trunk", &self.trunk), ("head", &self.head)],
        )
    }

    pub fn from_checkpoint(mut ckpt: Checkpoint) -> Result<Self> {
        expect_kind(&ckpt, BASELINE_KIND)?;
        let rate = ckpt.architecture.dropout_rate.unwrap_or(DEFAULT_DROPOUT_RATE);
        let reference = build_baseline_with(ckpt.architecture.input_dim, 0, rate)?;
        let trunk = ckpt.take_stack("trunk")?;
        let head = ckpt.take_stack("head")?;
        expect_same("trunk", &trunk, &reference.trunk)?;
        expect_same("head", &head, &reference.head)?;
        Ok(BaselineMlp {
            trunk,
            head,
            dropout_rate: rate,
        })
    }
}

impl DannModel {
    pub fn to_checkpoint(&self, feature_names: &[String]) -> Checkpoint {
        Checkpoint::new(
            ArchitectureTag {
                kind: DANN_KIND.into(),
                input_dim: self.extractor.input_dim(),
                dropout_rate: Some(self.dropout_rate),
                feature_names: feature_names.to_vec(),
            },
            vec![
                ("extractor", &self.extractor),
                ("label_head", &self.label_head),
                ("domain_head", &self.domain_head),
            ],
        )
    }

    pub fn from_checkpoint(mut ckpt: Checkpoint) -> Result<Self> {
        expect_kind(&ckpt, DANN_KIND)?;
        let rate = ckpt.architecture.dropout_rate.unwrap_or(DEFAULT_DROPOUT_RATE);
        let reference = build_dann_with(ckpt.architecture.input_dim, 0, rate)?;
        let extractor = ckpt.take_stack("extractor")?;
        let label_head = ckpt.take_stack("label_head")?;
        let domain_head = ckpt.take_stack("domain_head")?;
        expect_same("extractor", &extractor, &reference.extractor)?;
        expect_same("label_head", &label_head, &reference.label_head)?;
        expect_same("domain_head", &domain_head, &reference.domain_head)?;
        Ok(DannModel {
            extractor,
            label_head,
            domain_head,
            dropout_rate: rate,
        })
    }
}

/// Either model, as stored in a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    Baseline(BaselineMlp),
    Dann(DannModel),
}

impl AnyModel {
    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        match ckpt.architecture.kind.as_str() {
            BASELINE_KIND => Ok(AnyModel::Baseline(BaselineMlp::from_checkpoint(ckpt)?)),
            DANN_KIND => Ok(AnyModel::Dann(DannModel::from_checkpoint(ckpt)?)),
            other => Err(Error::Checkpoint(format!("unknown model kind {other:?}"))),
        }
    }

    pub fn classifier(&mut self) -> &mut dyn Classifier {
        match self {
            AnyModel::Baseline(m) => m,
            AnyModel::Dann(m) => m,
        }
    }
}
