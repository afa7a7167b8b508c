//! Mini-batch training loops for the baseline and the adversarial model.
//!
//! Random streams are split by role so that a DANN run with a zero reversal
//! weight consumes exactly the same source-side randomness as a label-only
//! run: stream 0 shuffles the source, 1 drives source-pass dropout, 2
//! shuffles the target and 3 drives target-pass dropout.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{EarlyStop, TrainConfig};
use super::metrics::accuracy;
use crate::data::{Dataset, SplitData};
use crate::error::{Error, Result};
use crate::models::{build_baseline_with, build_dann_with, BaselineMlp, Classifier, DannModel};
use crate::nn::{softmax_cross_entropy, AdamState, Matrix, Pass};

const SOURCE_DOMAIN: usize = 0;
const TARGET_DOMAIN: usize = 1;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Splits handed to a trainer. Target adaptation rows are features only.
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub source_train: &'a Dataset,
    pub source_val: &'a Dataset,
    pub target_unlabeled: Option<&'a Matrix>,
    /// Labeled target rows, used only for monitoring.
    pub target_val: Option<&'a Dataset>,
}

impl<'a> TrainData<'a> {
    pub fn from_splits(s: &'a SplitData) -> Self {
        TrainData {
            source_train: &s.source_train,
            source_val: &s.source_val,
            target_unlabeled: Some(&s.target_unlabeled.features),
            target_val: Some(&s.target_eval),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub lambda: f64,
    pub label_loss: f64,
    pub domain_loss_source: f64,
    pub domain_loss_target: f64,
    /// `label_loss − lambda·(domain_loss_source + domain_loss_target)`.
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub steps: usize,
    pub label_loss: f64,
    pub domain_loss_source: Option<f64>,
    pub domain_loss_target: Option<f64>,
    /// Reversal weight at the epoch's last step.
    pub lambda: Option<f64>,
    pub source_val_acc: f64,
    pub target_val_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    pub steps: Vec<StepRecord>,
    pub monitor: EarlyStop,
    /// Epoch whose parameters were kept (the last one when monitoring is off).
    pub best_epoch: usize,
    pub best_acc: Option<f64>,
    pub stopped_early: bool,
    /// DANN training ran label-only because no target rows were available.
    pub fell_back: bool,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl History {
    pub fn source_val_trajectory(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.source_val_acc).collect()
    }

    pub fn write_epochs_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "epoch",
            "steps",
            "label_loss",
            "domain_loss_source",
            "domain_loss_target",
            "lambda",
            "source_val_acc",
            "target_val_acc",
        ])?;
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                e.steps.to_string(),
                e.label_loss.to_string(),
                opt(e.domain_loss_source),
                opt(e.domain_loss_target),
                opt(e.lambda),
                e.source_val_acc.to_string(),
                opt(e.target_val_acc),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_steps_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "step",
            "epoch",
            "lambda",
            "label_loss",
            "domain_loss_source",
            "domain_loss_target",
            "total",
        ])?;
        for s in &self.steps {
            w.write_record([
                s.step.to_string(),
                s.epoch.to_string(),
                s.lambda.to_string(),
                s.label_loss.to_string(),
                s.domain_loss_source.to_string(),
                s.domain_loss_target.to_string(),
                s.total.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Source-side mini-batches. Trailing batches of one row are skipped because
/// train-mode batch norm needs two.
fn batches(order: &[usize], size: usize) -> impl Iterator<Item = &[usize]> {
    order.chunks(size).filter(|c| c.len() >= 2)
}

fn batches_per_epoch(n: usize, size: usize) -> usize {
    n / size + usize::from(n % size >= 2)
}

/// Shared epoch driver: shuffling, evaluation, early stopping and
/// best-parameter retention. `step` performs one optimizer update.
fn drive<M, F>(
    mut model: M,
    data: &TrainData<'_>,
    cfg: &TrainConfig,
    monitor: EarlyStop,
    mut step: F,
) -> Result<(M, History)>
where
    M: Classifier + Clone,
    F: FnMut(&mut M, &Matrix, &[usize], usize, usize) -> Result<StepRecord>,
{
    cfg.validate()?;
    let n = data.source_train.len();
    if n < 2 {
        return Err(Error::invalid("source training split needs at least 2 rows"));
    }
    if data.source_val.is_empty() {
        return Err(Error::invalid("source validation split is empty"));
    }
    let monitor = match (monitor, data.target_val) {
        (EarlyStop::TargetVal, None) => {
            log::warn!("no labeled target split for early stopping; monitoring source validation");
            EarlyStop::SourceVal
        }
        (m, _) => m,
    };

    let total_steps = cfg.epochs * batches_per_epoch(n, cfg.batch_size);
    let mut shuffle_rng = stream(cfg.seed, 0);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = History {
        monitor,
        ..History::default()
    };
    let mut best: Option<(f64, M)> = None;
    let mut since_best = 0;
    let mut global_step = 0;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let first_step = history.steps.len();
        for chunk in batches(&order, cfg.batch_size) {
            let xb = data.source_train.features.select_rows(chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| data.source_train.labels[i]).collect();
            let mut rec = step(&mut model, &xb, &yb, global_step, total_steps)?;
            rec.epoch = epoch;
            history.steps.push(rec);
            global_step += 1;
        }
        let steps = &history.steps[first_step..];
        let k = steps.len().max(1) as f64;
        let mean = |f: fn(&StepRecord) -> f64| steps.iter().map(f).sum::<f64>() / k;
        let source_val_acc = accuracy(&mut model, data.source_val)?;
        let target_val_acc = data.target_val.map(|t| accuracy(&mut model, t)).transpose()?;
        history.epochs.push(EpochRecord {
            epoch,
            steps: steps.len(),
            label_loss: mean(|s| s.label_loss),
            domain_loss_source: Some(mean(|s| s.domain_loss_source)),
            domain_loss_target: Some(mean(|s| s.domain_loss_target)),
            lambda: steps.last().map(|s| s.lambda),
            source_val_acc,
            target_val_acc,
        });
        log::debug!(
            "epoch {epoch}: loss {:.4}, source val {source_val_acc:.2}%, target val {}",
            mean(|s| s.label_loss),
            opt(target_val_acc)
        );

        let monitored = match monitor {
            EarlyStop::Off => continue,
            EarlyStop::SourceVal => source_val_acc,
            EarlyStop::TargetVal => target_val_acc.expect("checked above"),
        };
        if best.as_ref().is_none_or(|(acc, _)| monitored > *acc) {
            best = Some((monitored, model.clone()));
            history.best_epoch = epoch;
            history.best_acc = Some(monitored);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                history.stopped_early = true;
                break;
            }
        }
    }
    if monitor == EarlyStop::Off {
        history.best_epoch = history.epochs.len();
    } else if let Some((_, m)) = best {
        model = m;
    }
    Ok((model, history))
}

/// Label-only training of any classifier's trunk and label head.
///
/// Early stopping watches source validation accuracy unless it is switched off.
pub fn train_classifier<M: Classifier + Clone>(
    model: M,
    data: &TrainData<'_>,
    cfg: &TrainConfig,
) -> Result<(M, History)> {
    let monitor = match cfg.early_stop {
        EarlyStop::Off => EarlyStop::Off,
        _ => EarlyStop::SourceVal,
    };
    let mut adam = AdamState::new(cfg.lr);
    let mut dropout_rng = stream(cfg.seed, 1);
    let (model, mut history) = drive(model, data, cfg, monitor, |model, xb, yb, step, _| {
        let (trunk, head) = model.label_path_mut();
        trunk.zero_grad();
        head.zero_grad();
        let mut pass = Pass::train().with_rng(&mut dropout_rng);
        let (features, trunk_cache) = trunk.forward(xb, &mut pass)?;
        let (logits, head_cache) = head.forward(&features, &mut pass)?;
        let (loss, grad) = softmax_cross_entropy(&logits, yb)?;
        let feature_grad = head.backward(&head_cache, &grad)?;
        trunk.backward(&trunk_cache, &feature_grad)?;
        adam.step(&mut [trunk, head])?;
        Ok(StepRecord {
            step,
            epoch: 0,
            lambda: 0.0,
            label_loss: loss,
            domain_loss_source: 0.0,
            domain_loss_target: 0.0,
            total: loss,
        })
    })?;
    for e in &mut history.epochs {
        e.domain_loss_source = None;
        e.domain_loss_target = None;
        e.lambda = None;
    }
    Ok((model, history))
}

/// Builds a baseline from `cfg.seed` and trains it on the source only.
pub fn train_baseline(data: &TrainData<'_>, cfg: &TrainConfig) -> Result<(BaselineMlp, History)> {
    let model = build_baseline_with(data.source_train.dim(), cfg.seed, cfg.dropout)?;
    train_classifier(model, data, cfg)
}

/// Cycles through shuffled target rows, reshuffling after each pass.
struct TargetCycler<'a> {
    rows: &'a Matrix,
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl<'a> TargetCycler<'a> {
    fn new(rows: &'a Matrix, rng: ChaCha8Rng) -> Self {
        TargetCycler {
            rows,
            order: (0..rows.rows()).collect(),
            pos: rows.rows(),
            rng,
        }
    }

    fn next_batch(&mut self, size: usize) -> Matrix {
        let mut picked = Vec::with_capacity(size);
        while picked.len() < size {
            if self.pos == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            picked.push(self.order[self.pos]);
            self.pos += 1;
        }
        self.rows.select_rows(&picked)
    }
}

/// Adam states for the adversarial model. The domain head gets its own
/// learning rate so the discriminator can run on a faster time scale than
/// the extractor it is played against; with equal rates this is the same
/// update as one Adam over all parameters.
#[derive(Debug, Clone)]
pub struct DannOptimizer {
    /// Extractor and label head.
    pub body: AdamState,
    pub domain: AdamState,
}

impl DannOptimizer {
    pub fn new(cfg: &TrainConfig) -> Self {
        DannOptimizer {
            body: AdamState::new(cfg.lr),
            domain: AdamState::new(cfg.lr * cfg.domain_lr_scale),
        }
    }
}

/// One adversarial update on a source batch and a target batch.
///
/// The target pass normalizes with the source batch's statistics and leaves
/// running statistics untouched. Normalizing each domain by its own batch
/// would remove exactly the mean shift the domain head is meant to detect.
/// The backward pass routes the target gradient through those shared
/// statistics into the source rows, so the extractor sees the exact gradient
/// of the combined objective.
#[allow(clippy::too_many_arguments)]
pub fn dann_step(
    model: &mut DannModel,
    optim: &mut DannOptimizer,
    source_x: &Matrix,
    source_y: &[usize],
    target_x: &Matrix,
    lambda: f64,
    source_rng: &mut ChaCha8Rng,
    target_rng: &mut ChaCha8Rng,
) -> Result<StepRecord> {
    model.extractor.zero_grad();
    model.label_head.zero_grad();
    model.domain_head.zero_grad();

    let mut pass = Pass::train().with_rng(source_rng);
    let out = crate::models::dann_forward(model, source_x, &mut pass, lambda)?;
    let (label_loss, label_grad) = softmax_cross_entropy(&out.label_logits, source_y)?;
    let source_domains = vec![SOURCE_DOMAIN; source_x.rows()];
    let (ds_loss, ds_grad) = softmax_cross_entropy(&out.domain_logits, &source_domains)?;

    let mut pass = Pass::train().with_rng(target_rng).with_reference_norm();
    let (tf, t_ext_cache) = model.extractor.forward(target_x, &mut pass)?;
    let (t_logits, t_dom_cache) = model.domain_head.forward(&tf, &mut pass)?;
    let target_domains = vec![TARGET_DOMAIN; target_x.rows()];
    let (dt_loss, dt_grad) = softmax_cross_entropy(&t_logits, &target_domains)?;

    let mut source_feature_grad = model.label_head.backward(&out.label_cache, &label_grad)?;
    source_feature_grad.add_assign(&model.domain_head.backward(&out.domain_cache, &ds_grad)?)?;
    let target_feature_grad = model.domain_head.backward(&t_dom_cache, &dt_grad)?;
    model.extractor.backward_paired(
        (&out.extractor_cache, &source_feature_grad),
        (&t_ext_cache, &target_feature_grad),
    )?;

    optim.body.step(&mut [&mut model.extractor, &mut model.label_head])?;
    optim.domain.step(&mut [&mut model.domain_head])?;
    Ok(StepRecord {
        step: 0,
        epoch: 0,
        lambda,
        label_loss,
        domain_loss_source: ds_loss,
        domain_loss_target: dt_loss,
        total: label_loss - lambda * (ds_loss + dt_loss),
    })
}

/// Adversarial training of an existing model. Without usable target rows it
/// falls back to label-only training with a warning.
pub fn train_dann_model(
    model: DannModel,
    data: &TrainData<'_>,
    cfg: &TrainConfig,
) -> Result<(DannModel, History)> {
    let target = match data.target_unlabeled {
        Some(t) if t.rows() >= 2 => t,
        _ => {
            log::warn!("no unlabeled target rows; training the label path only");
            let (m, mut h) = train_classifier(model, data, cfg)?;
            h.fell_back = true;
            return Ok((m, h));
        }
    };
    if target.cols() != data.source_train.dim() {
        return Err(Error::shape(
            "train_dann",
            format!(
                "source width {} vs target width {}",
                data.source_train.dim(),
                target.cols()
            ),
        ));
    }
    let schedule = cfg.schedule();
    let mut optim = DannOptimizer::new(cfg);
    let mut source_rng = stream(cfg.seed, 1);
    let mut target_rng = stream(cfg.seed, 3);
    let mut cycler = TargetCycler::new(target, stream(cfg.seed, 2));
    drive(model, data, cfg, cfg.early_stop, |model, xb, yb, step, total| {
        let lambda = schedule.at(step as f64 / total as f64);
        let xt = cycler.next_batch(xb.rows());
        let mut rec = dann_step(
            model,
            &mut optim,
            xb,
            yb,
            &xt,
            lambda,
            &mut source_rng,
            &mut target_rng,
        )?;
        rec.step = step;
        Ok(rec)
    })
}

/// Builds a DANN from `cfg.seed` and trains it adversarially.
pub fn train_dann(data: &TrainData<'_>, cfg: &TrainConfig) -> Result<(DannModel, History)> {
    let model = build_dann_with(data.source_train.dim(), cfg.seed, cfg.dropout)?;
    train_dann_model(model, data, cfg)
}
