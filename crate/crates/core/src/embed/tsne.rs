//! Exact t-SNE.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Matrix;

/// Entropy tolerance (nats) of the per-point bandwidth search.
pub const ENTROPY_TOLERANCE: f64 = 1e-5;
const MAX_BISECTIONS: usize = 200;
const DUPLICATE_JITTER: f64 = 1e-10;
const MIN_GAIN: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    /// Iterations run with exaggerated affinities and the initial momentum.
    pub exaggeration_iters: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub init_std: f64,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            init_std: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsneOutput {
    /// n × 2 coordinates.
    pub points: Matrix,
    /// KL(P‖Q) after each iteration, measured against the unexaggerated P.
    pub kl_trace: Vec<f64>,
    /// Entropy (nats) of each conditional distribution after the bandwidth search.
    pub entropies: Vec<f64>,
}

fn squared_distances(x: &Matrix) -> Matrix {
    let n = x.rows();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = x.row(i);
            (0..n)
                .map(|j| {
                    x.row(j)
                        .iter()
                        .zip(xi)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum()
                })
                .collect()
        })
        .collect();
    Matrix::from_vec(n, n, rows.concat()).expect("square")
}

/// Conditional distribution of row `i` at precision `beta`, with its entropy.
fn conditional_row(dist: &[f64], i: usize, beta: f64, out: &mut [f64]) -> f64 {
    let d_min = dist
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, d)| *d)
        .fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    for (j, (o, d)) in out.iter_mut().zip(dist).enumerate() {
        *o = if j == i { 0.0 } else { (-beta * (d - d_min)).exp() };
        sum += *o;
    }
    let mut weighted = 0.0;
    for (o, d) in out.iter_mut().zip(dist) {
        *o /= sum;
        weighted += *o * (d - d_min);
    }
    sum.ln() + beta * weighted
}

/// Row-normalized affinities `p_{j|i}` whose entropies match `ln(perplexity)`,
/// plus those entropies.
pub fn conditional_affinities(x: &Matrix, perplexity: f64) -> Result<(Matrix, Vec<f64>)> {
    let n = x.rows();
    check_perplexity(n, perplexity)?;
    let dist = squared_distances(x);
    let target = perplexity.ln();
    let rows: Vec<(Vec<f64>, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let d = dist.row(i);
            let mut p = vec![0.0; n];
            let (mut lo, mut hi) = (0.0, f64::INFINITY);
            let mut beta = 1.0;
            let mut h = conditional_row(d, i, beta, &mut p);
            for _ in 0..MAX_BISECTIONS {
                if (h - target).abs() < ENTROPY_TOLERANCE {
                    break;
                }
                // Entropy falls as the precision rises.
                if h > target {
                    lo = beta;
                    beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
                } else {
                    hi = beta;
                    beta = (beta + lo) / 2.0;
                }
                h = conditional_row(d, i, beta, &mut p);
            }
            (p, h)
        })
        .collect();
    let mut data = Vec::with_capacity(n * n);
    let mut entropies = Vec::with_capacity(n);
    for (p, h) in rows {
        data.extend(p);
        entropies.push(h);
    }
    Ok((Matrix::from_vec(n, n, data)?, entropies))
}

/// `(P + Pᵀ) / 2n`, summing to one.
pub fn joint_affinities(conditional: &Matrix) -> Matrix {
    let n = conditional.rows();
    let mut p = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            p.set(i, j, (conditional.get(i, j) + conditional.get(j, i)) / (2.0 * n as f64));
        }
    }
    p
}

fn check_perplexity(n: usize, perplexity: f64) -> Result<()> {
    if n < 10 {
        return Err(Error::invalid(format!("t-SNE needs at least 10 points, got {n}")));
    }
    if !(perplexity > 0.0 && perplexity < (n as f64 - 1.0) / 3.0) {
        return Err(Error::invalid(format!(
            "perplexity {perplexity} must be positive and below (n − 1)/3 = {:.2}",
            (n as f64 - 1.0) / 3.0
        )));
    }
    Ok(())
}

/// The Gaussian starting layout used by [`tsne`].
pub fn initial_layout(n: usize, cfg: &TsneConfig) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(50);
    let data = (0..n * 2)
        .map(|_| cfg.init_std * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Matrix::from_vec(n, 2, data).expect("n × 2")
}

pub fn tsne(x: &Matrix, cfg: &TsneConfig) -> Result<TsneOutput> {
    tsne_from(x, &initial_layout(x.rows(), cfg), cfg)
}

/// t-SNE from an explicit starting layout. Permuting the rows of `x` and
/// `init` together permutes the output rows the same way.
pub fn tsne_from(x: &Matrix, init: &Matrix, cfg: &TsneConfig) -> Result<TsneOutput> {
    let n = x.rows();
    check_perplexity(n, cfg.perplexity)?;
    if init.shape() != (n, 2) {
        return Err(Error::shape("t-SNE init", format!("expected ({n}, 2), got {:?}", init.shape())));
    }
    if !x.is_finite() {
        return Err(Error::invalid("t-SNE input contains non-finite values"));
    }

    let dist = squared_distances(x);
    let has_duplicates = (0..n).any(|i| (0..n).any(|j| i != j && dist.get(i, j) == 0.0));
    let jittered;
    let x = if has_duplicates {
        log::warn!("t-SNE input has duplicate rows; adding {DUPLICATE_JITTER:e} jitter");
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(51);
        let mut noisy = x.clone();
        for v in noisy.data_mut() {
            *v += DUPLICATE_JITTER * rng.sample::<f64, _>(StandardNormal);
        }
        jittered = noisy;
        &jittered
    } else {
        x
    };

    let (conditional, entropies) = conditional_affinities(x, cfg.perplexity)?;
    let p = joint_affinities(&conditional);

    let mut y = init.clone();
    let mut velocity = Matrix::zeros(n, 2);
    let mut gains = Matrix::filled(n, 2, 1.0);
    let mut kl_trace = Vec::with_capacity(cfg.iterations);

    for iter in 0..cfg.iterations {
        let early = iter < cfg.exaggeration_iters;
        let exaggeration = if early { cfg.early_exaggeration } else { 1.0 };
        let momentum = if early {
            cfg.initial_momentum
        } else {
            cfg.final_momentum
        };

        // Student-t kernel rows and their sums, row-parallel with a fixed
        // reduction order.
        let kernel: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let yi = y.row(i);
                (0..n)
                    .map(|j| {
                        if i == j {
                            return 0.0;
                        }
                        let yj = y.row(j);
                        let d = (yi[0] - yj[0]).powi(2) + (yi[1] - yj[1]).powi(2);
                        1.0 / (1.0 + d)
                    })
                    .collect()
            })
            .collect();
        let z: f64 = kernel.iter().map(|r| r.iter().sum::<f64>()).sum();

        let rows: Vec<([f64; 2], f64)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let yi = y.row(i);
                let mut g = [0.0; 2];
                let mut kl = 0.0;
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let num = kernel[i][j];
                    let q = (num / z).max(f64::MIN_POSITIVE);
                    let pij = p.get(i, j);
                    let coeff = (exaggeration * pij - q) * num;
                    let yj = y.row(j);
                    g[0] += coeff * (yi[0] - yj[0]);
                    g[1] += coeff * (yi[1] - yj[1]);
                    if pij > 0.0 {
                        kl += pij * (pij / q).ln();
                    }
                }
                ([4.0 * g[0], 4.0 * g[1]], kl)
            })
            .collect();
        kl_trace.push(rows.iter().map(|r| r.1).sum::<f64>().max(0.0));

        for (i, (g, _)) in rows.iter().enumerate() {
            for k in 0..2 {
                let v = velocity.get(i, k);
                let gain = if (g[k] > 0.0) != (v > 0.0) {
                    gains.get(i, k) + 0.2
                } else {
                    (gains.get(i, k) * 0.8).max(MIN_GAIN)
                };
                gains.set(i, k, gain);
                let v = momentum * v - cfg.learning_rate * gain * g[k];
                velocity.set(i, k, v);
                y.set(i, k, y.get(i, k) + v);
            }
        }
        let mean = y.col_means();
        for r in 0..n {
            let row = y.row_mut(r);
            row[0] -= mean[0];
            row[1] -= mean[1];
        }
        if !y.is_finite() {
            return Err(Error::State(format!("t-SNE diverged at iteration {}", iter + 1)));
        }
    }
    Ok(TsneOutput {
        points: y,
        kl_trace,
        entropies,
    })
}
