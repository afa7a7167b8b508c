//! Controlled covariate-shift testbed: five Gaussian classes, with the target
//! domain translated and mildly rescaled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::dataset::Dataset;
use crate::domain::{Domain, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::nn::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthShift {
    pub n_per_class: usize,
    pub dim: usize,
    /// Norm of the translation applied to every target sample.
    pub shift_magnitude: f64,
    /// Distance of each class mean from the origin.
    pub class_radius: f64,
    /// Target noise std grows by this much per unit of shift.
    pub scale_per_shift: f64,
    /// Draw the shift direction over every coordinate instead of only the
    /// label-free ones.
    pub shift_all_dims: bool,
    pub seed: u64,
}

impl SynthShift {
    pub fn new(n_per_class: usize, dim: usize, shift_magnitude: f64, seed: u64) -> Self {
        SynthShift {
            n_per_class,
            dim,
            shift_magnitude,
            class_radius: 4.0,
            scale_per_shift: 0.05,
            shift_all_dims: true,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::invalid("synthetic shift needs d >= 2"));
        }
        if self.n_per_class < 10 {
            return Err(Error::invalid("synthetic shift needs at least 10 rows per class"));
        }
        if !(self.shift_magnitude >= 0.0 && self.shift_magnitude.is_finite()) {
            return Err(Error::invalid("shift magnitude must be finite and non-negative"));
        }
        Ok(())
    }

    /// Class means and the unit shift direction.
    ///
    /// With d > 5 the means sit on the first five axes, otherwise on a
    /// pentagon in the first plane. The shift direction is random over all
    /// coordinates, or over the label-free ones when `shift_all_dims` is off.
    fn geometry(&self, rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<f64>) {
        let d = self.dim;
        let means = (0..NUM_CLASSES)
            .map(|k| {
                let mut m = vec![0.0; d];
                if d > NUM_CLASSES {
                    m[k] = self.class_radius;
                } else {
                    let a = std::f64::consts::TAU * k as f64 / NUM_CLASSES as f64;
                    m[0] = self.class_radius * a.cos();
                    m[1] = self.class_radius * a.sin();
                }
                m
            })
            .collect();
        let free = if d > NUM_CLASSES && !self.shift_all_dims { NUM_CLASSES } else { 0 };
        let mut dir = vec![0.0; d];
        loop {
            for v in &mut dir[free..] {
                *v = rng.sample(StandardNormal);
            }
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-6 {
                dir.iter_mut().for_each(|v| *v /= norm);
                break;
            }
        }
        (means, dir)
    }

    pub fn generate(&self) -> Result<(Dataset, Dataset)> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(20);
        let (means, dir) = self.geometry(&mut rng);
        let scale = 1.0 + self.scale_per_shift * self.shift_magnitude;
        let offset: Vec<f64> = dir.iter().map(|v| v * self.shift_magnitude).collect();

        let draw = |stream: u64, domain: Domain, std: f64, offset: &[f64]| -> Result<Dataset> {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.set_stream(stream);
            let n = self.n_per_class * NUM_CLASSES;
            let mut data = Vec::with_capacity(n * self.dim);
            let mut labels = Vec::with_capacity(n);
            for (k, mean) in means.iter().enumerate() {
                for _ in 0..self.n_per_class {
                    for j in 0..self.dim {
                        let z: f64 = rng.sample(StandardNormal);
                        data.push(mean[j] + std * z + offset[j]);
                    }
                    labels.push(k);
                }
            }
            Dataset::unnamed(Matrix::from_vec(n, self.dim, data)?, labels, domain)
        };
        let source = draw(21, Domain::Rayleigh, 1.0, &vec![0.0; self.dim])?;
        let target = draw(22, Domain::Rician, scale, &offset)?;
        Ok((source, target))
    }
}

/// Source and target sets with the default class geometry.
pub fn synth_shift(
    n_per_class: usize,
    d: usize,
    shift_magnitude: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    SynthShift::new(n_per_class, d, shift_magnitude, seed).generate()
}
