//! Linear domain probe: how well can source and target rows be told apart?

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::Classifier;
use crate::nn::{softmax_cross_entropy, AdamState, Layer, LayerStack, LinearLayer, Matrix, Pass};

pub const PROBE_EPOCHS: usize = 200;
pub const PROBE_LR: f64 = 1e-2;
pub const PROBE_BATCH: usize = 128;
pub const PROBE_TRAIN_FRACTION: f64 = 0.7;
pub const PROBE_MIN_ROWS: usize = 20;

/// Held-out accuracy (fraction in `[0, 1]`) of a logistic-regression probe
/// trained to separate `source` rows (class 0) from `target` rows (class 1).
///
/// Each domain is split 70/30 on its own. Inputs are standardized with the
/// probe-train statistics. Inputs are copied, never modified.
pub fn domain_probe(source: &Matrix, target: &Matrix, seed: u64) -> Result<f64> {
    if source.cols() != target.cols() {
        return Err(Error::shape(
            "domain probe",
            format!("source width {} vs target width {}", source.cols(), target.cols()),
        ));
    }
    if source.rows() < PROBE_MIN_ROWS || target.rows() < PROBE_MIN_ROWS {
        return Err(Error::invalid(format!(
            "domain probe needs at least {PROBE_MIN_ROWS} rows per domain"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(40);

    let mut split = |n: usize| {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        let n_train = (n as f64 * PROBE_TRAIN_FRACTION).round() as usize;
        let test = idx.split_off(n_train);
        (idx, test)
    };
    let (s_train, s_test) = split(source.rows());
    let (t_train, t_test) = split(target.rows());

    let stack_rows = |s: &[usize], t: &[usize]| -> Result<(Matrix, Vec<usize>)> {
        let x = source.select_rows(s).vstack(&target.select_rows(t))?;
        let y = std::iter::repeat_n(0, s.len())
            .chain(std::iter::repeat_n(1, t.len()))
            .collect();
        Ok((x, y))
    };
    let (mut x_train, y_train) = stack_rows(&s_train, &t_train)?;
    let (mut x_test, y_test) = stack_rows(&s_test, &t_test)?;

    let means = x_train.col_means();
    let d = x_train.cols();
    let mut stds = vec![0.0; d];
    for row in x_train.row_iter() {
        for j in 0..d {
            stds[j] += (row[j] - means[j]).powi(2);
        }
    }
    let n_train = x_train.rows() as f64;
    stds.iter_mut().for_each(|s| *s = (*s / n_train).sqrt().max(1e-12));
    for x in [&mut x_train, &mut x_test] {
        for r in 0..x.rows() {
            for (j, v) in x.row_mut(r).iter_mut().enumerate() {
                *v = (*v - means[j]) / stds[j];
            }
        }
    }

    let mut probe = LayerStack::new(d, vec![Layer::Linear(LinearLayer::new(d, 2, &mut rng))])?;
    let mut adam = AdamState::new(PROBE_LR);
    let mut order: Vec<usize> = (0..x_train.rows()).collect();
    for _ in 0..PROBE_EPOCHS {
        order.shuffle(&mut rng);
        for chunk in order.chunks(PROBE_BATCH) {
            let xb = x_train.select_rows(chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| y_train[i]).collect();
            probe.zero_grad();
            let (logits, cache) = probe.forward(&xb, &mut Pass::train())?;
            let (_, grad) = softmax_cross_entropy(&logits, &yb)?;
            probe.backward(&cache, &grad)?;
            adam.step(&mut [&mut probe])?;
        }
    }
    let predictions = probe.infer(&x_test)?.argmax_rows();
    let correct = predictions.iter().zip(&y_test).filter(|(p, y)| p == y).count();
    Ok(correct as f64 / y_test.len() as f64)
}

/// Row indices giving both datasets the same class composition: for each
/// class, the first `min(n_source, n_target)` rows of that class from each.
///
/// Without this, a probe can tell the domains apart by class mix alone.
pub fn class_matched_rows(source: &Dataset, target: &Dataset) -> (Vec<usize>, Vec<usize>) {
    let (cs, ct) = (source.class_indices(), target.class_indices());
    let mut s = Vec::new();
    let mut t = Vec::new();
    for (a, b) in cs.iter().zip(&ct) {
        let k = a.len().min(b.len());
        s.extend_from_slice(&a[..k]);
        t.extend_from_slice(&b[..k]);
    }
    (s, t)
}

/// Domain classification accuracy of a model's representation, probed on
/// class-matched rows of `source` and `target`.
pub fn feature_dca<M: Classifier + ?Sized>(
    model: &mut M,
    source: &Dataset,
    target: &Dataset,
    seed: u64,
) -> Result<f64> {
    let (s, t) = class_matched_rows(source, target);
    let fs = model.extract_features(&source.features.select_rows(&s))?;
    let ft = model.extract_features(&target.features.select_rows(&t))?;
    domain_probe(&fs, &ft, seed)
}
