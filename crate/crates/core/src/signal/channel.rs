//! Flat Rayleigh/Rician fading plus complex AWGN.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::{Band, Domain};
use crate::error::{Error, Result};

pub const DEFAULT_SNR_DB: f64 = 15.0;
pub const DEFAULT_RICIAN_K: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelModel {
    Rayleigh,
    Rician,
    AwgnOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fading {
    /// One channel gain per frame.
    Block,
    /// A fresh gain for every symbol.
    PerSymbol,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub model: ChannelModel,
    /// Linear Rician K-factor (LOS power / scattered power).
    pub k_factor: f64,
    /// Per-symbol SNR for unit signal power. `+∞` disables noise.
    pub snr_db: f64,
    pub fading: Fading,
    pub band: Band,
    pub seed: u64,
}

impl ChannelConfig {
    /// Default generation preset for a domain and band.
    pub fn preset(domain: Domain, band: Band, seed: u64) -> Self {
        ChannelConfig {
            model: match domain {
                Domain::Rayleigh => ChannelModel::Rayleigh,
                Domain::Rician => ChannelModel::Rician,
            },
            k_factor: DEFAULT_RICIAN_K,
            snr_db: DEFAULT_SNR_DB,
            fading: Fading::Block,
            band,
            seed,
        }
    }

    pub fn domain(&self) -> Option<Domain> {
        match self.model {
            ChannelModel::Rayleigh => Some(Domain::Rayleigh),
            ChannelModel::Rician => Some(Domain::Rician),
            ChannelModel::AwgnOnly => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k_factor >= 0.0) || !self.k_factor.is_finite() {
            return Err(Error::invalid(format!(
                "Rician K-factor must be finite and ≥ 0, got {}",
                self.k_factor
            )));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::invalid(format!("invalid SNR {} dB", self.snr_db)));
        }
        Ok(())
    }

    /// Complex noise variance `N0` for unit signal power, zero when noise is off.
    pub fn noise_variance(&self) -> f64 {
        if self.snr_db == f64::INFINITY {
            0.0
        } else {
            10f64.powf(-self.snr_db / 10.0)
        }
    }
}

/// Circularly-symmetric complex Gaussian with `E|z|² = variance`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * s, im * s)
}

/// Draws one channel gain with `E|h|² = 1`.
pub fn draw_gain<R: Rng + ?Sized>(model: ChannelModel, k_factor: f64, rng: &mut R) -> Complex64 {
    match model {
        ChannelModel::AwgnOnly => Complex64::new(1.0, 0.0),
        ChannelModel::Rayleigh => complex_gaussian(rng, 1.0),
        ChannelModel::Rician => {
            let los = (k_factor / (k_factor + 1.0)).sqrt();
            let scatter = (1.0 / (k_factor + 1.0)).sqrt();
            Complex64::new(los, 0.0) + complex_gaussian(rng, 1.0) * scatter
        }
    }
}

/// `y = h·x + n` elementwise.
pub fn apply_channel<R: Rng + ?Sized>(
    seq: &[Complex64],
    config: &ChannelConfig,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    if seq.is_empty() {
        return Err(Error::invalid("apply_channel on an empty sequence"));
    }
    config.validate()?;
    let n0 = config.noise_variance();
    let mut h = draw_gain(config.model, config.k_factor, rng);
    let mut out = Vec::with_capacity(seq.len());
    for (i, &x) in seq.iter().enumerate() {
        if i > 0 && config.fading == Fading::PerSymbol {
            h = draw_gain(config.model, config.k_factor, rng);
        }
        let mut y = h * x;
        if n0 > 0.0 {
            y += complex_gaussian(rng, n0);
        }
        out.push(y);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(model: ChannelModel, k: f64, snr: f64) -> ChannelConfig {
        ChannelConfig {
            model,
            k_factor: k,
            snr_db: snr,
            fading: Fading::PerSymbol,
            band: Band::Mhz1,
            seed: 0,
        }
    }

    #[test]
    fn noiseless_awgn_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<Complex64> = (0..64).map(|i| Complex64::new(i as f64, -0.5)).collect();
        let y = apply_channel(&x, &cfg(ChannelModel::AwgnOnly, 0.0, f64::INFINITY), &mut rng).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn rejects_negative_k_and_empty_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = vec![Complex64::new(1.0, 0.0)];
        assert!(apply_channel(&x, &cfg(ChannelModel::Rician, -1.0, 10.0), &mut rng).is_err());
        assert!(apply_channel(&[], &cfg(ChannelModel::Rician, 1.0, 10.0), &mut rng).is_err());
    }

    #[test]
    fn block_fading_uses_one_gain() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut c = cfg(ChannelModel::Rayleigh, 0.0, f64::INFINITY);
        c.fading = Fading::Block;
        let x = vec![Complex64::new(1.0, 0.0); 16];
        let y = apply_channel(&x, &c, &mut rng).unwrap();
        assert!(y.iter().all(|v| *v == y[0]));
    }

    #[test]
    fn rayleigh_envelope_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let env: Vec<f64> = (0..n)
            .map(|_| draw_gain(ChannelModel::Rayleigh, 0.0, &mut rng).norm())
            .collect();
        let mean = env.iter().sum::<f64>() / n as f64;
        // Rayleigh(σ = 1/√2): mean σ√(π/2), variance (2 − π/2)σ².
        let expect = std::f64::consts::PI.sqrt() / 2.0;
        let sd = ((2.0 - std::f64::consts::FRAC_PI_2) * 0.5 / n as f64).sqrt();
        assert!((mean - expect).abs() < 3.0 * sd, "{mean} vs {expect}");
        assert!((expect - 0.8862).abs() < 1e-4);
    }
}
