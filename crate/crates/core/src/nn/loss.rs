use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Mean softmax cross-entropy over the batch.
///
/// Returns the loss and its gradient with respect to the logits,
/// `(softmax − one_hot) / batch`.
pub fn softmax_cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    let (n, classes) = logits.shape();
    if labels.len() != n {
        return Err(Error::shape(
            "softmax_cross_entropy",
            format!("{n} logit rows but {} labels", labels.len()),
        ));
    }
    if n == 0 {
        return Err(Error::invalid("softmax_cross_entropy on an empty batch"));
    }
    if let Some((i, &bad)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
        return Err(Error::invalid(format!(
            "label {bad} at row {i} outside [0, {classes})"
        )));
    }

    let mut grad = Matrix::zeros(n, classes);
    let mut total = 0.0;
    let inv_n = 1.0 / n as f64;
    for (r, &label) in labels.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = row.iter().map(|&z| (z - max).exp()).sum();
        let log_sum = sum_exp.ln();
        total += -(row[label] - max - log_sum);
        let g = grad.row_mut(r);
        for (j, &z) in row.iter().enumerate() {
            let p = (z - max - log_sum).exp();
            g[j] = (p - if j == label { 1.0 } else { 0.0 }) * inv_n;
        }
    }
    Ok((total * inv_n, grad))
}

/// Row-wise softmax probabilities.
pub fn softmax(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    out
}
