//! Summaries of the frame's magnitude spectrum.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

pub const SPECTRAL_NAMES: [&str; 5] = [
    "spec_centroid",
    "spec_spread",
    "spec_flatness",
    "spec_papr",
    "spec_obw_frac",
];

/// Power threshold, relative to the peak bin, for occupied bandwidth.
pub const OBW_THRESHOLD_DB: f64 = -20.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralFeatures {
    /// Magnitude-weighted mean frequency, cycles/sample in [−0.5, 0.5).
    pub centroid: f64,
    /// Magnitude-weighted standard deviation around the centroid.
    pub spread: f64,
    /// Geometric over arithmetic mean of the magnitude spectrum.
    pub flatness: f64,
    /// Peak over mean instantaneous power of the time signal (linear).
    pub papr: f64,
    /// Fraction of bins within 20 dB of the peak bin's power.
    pub obw_fraction: f64,
    pub all_zero: bool,
}

impl SpectralFeatures {
    pub fn values(&self) -> [f64; 5] {
        [
            self.centroid,
            self.spread,
            self.flatness,
            self.papr,
            self.obw_fraction,
        ]
    }

    fn zero() -> Self {
        SpectralFeatures {
            centroid: 0.0,
            spread: 0.0,
            flatness: 0.0,
            papr: 0.0,
            obw_fraction: 0.0,
            all_zero: true,
        }
    }
}

/// Signed normalized frequency of DFT bin `k` out of `n`.
pub fn bin_frequency(k: usize, n: usize) -> f64 {
    if k < n.div_ceil(2) {
        k as f64 / n as f64
    } else {
        (k as f64 - n as f64) / n as f64
    }
}

pub fn spectral(frame: &[Complex64]) -> Result<SpectralFeatures> {
    spectral_with(frame, &mut FftPlanner::new())
}

/// As [`spectral`], reusing an FFT planner across frames. Frames whose
/// length is not a power of two are zero-padded.
pub fn spectral_with(frame: &[Complex64], planner: &mut FftPlanner<f64>) -> Result<SpectralFeatures> {
    if frame.is_empty() {
        return Err(Error::invalid("spectral features of an empty frame"));
    }
    let powers: Vec<f64> = frame.iter().map(|x| x.norm_sqr()).collect();
    let mean_power = powers.iter().sum::<f64>() / powers.len() as f64;
    if mean_power == 0.0 {
        return Ok(SpectralFeatures::zero());
    }
    let papr = powers.iter().copied().fold(0.0, f64::max) / mean_power;

    let n = frame.len().next_power_of_two();
    let mut buf = frame.to_vec();
    buf.resize(n, Complex64::new(0.0, 0.0));
    planner.plan_fft_forward(n).process(&mut buf);
    let mag: Vec<f64> = buf.iter().map(|x| x.norm()).collect();

    let total: f64 = mag.iter().sum();
    let centroid = mag
        .iter()
        .enumerate()
        .map(|(k, m)| bin_frequency(k, n) * m)
        .sum::<f64>()
        / total;
    let spread = (mag
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let d = bin_frequency(k, n) - centroid;
            d * d * m
        })
        .sum::<f64>()
        / total)
        .sqrt();

    let mean_log = mag
        .iter()
        .map(|m| m.max(f64::MIN_POSITIVE).ln())
        .sum::<f64>()
        / n as f64;
    let flatness = mean_log.exp() / (total / n as f64);

    let peak = mag.iter().copied().fold(0.0, f64::max);
    let threshold = peak * peak * 10f64.powf(OBW_THRESHOLD_DB / 10.0);
    let occupied = mag.iter().filter(|m| *m * *m >= threshold).count();

    Ok(SpectralFeatures {
        centroid,
        spread,
        flatness,
        papr,
        obw_fraction: occupied as f64 / n as f64,
        all_zero: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::channel::complex_gaussian;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn complex_exponential_is_a_single_bin() {
        let n = 256;
        let k = 19;
        let frame: Vec<Complex64> = (0..n)
            .map(|i| Complex64::from_polar(1.0, 2.0 * PI * (k * i) as f64 / n as f64))
            .collect();
        let s = spectral(&frame).unwrap();
        assert!((s.centroid * n as f64 - k as f64).abs() < 1e-6, "{}", s.centroid);
        assert!(s.spread < 1e-6, "{}", s.spread);
        assert!((s.papr - 1.0).abs() < 1e-12);
    }

    #[test]
    fn white_noise_is_flat() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let frame: Vec<Complex64> = (0..4096).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
        let s = spectral(&frame).unwrap();
        assert!((0.8..=1.0).contains(&s.flatness), "{}", s.flatness);
    }

    #[test]
    fn zero_frame_is_flagged() {
        let s = spectral(&[Complex64::new(0.0, 0.0); 16]).unwrap();
        assert!(s.all_zero);
        assert_eq!(s.values(), [0.0; 5]);
    }

    #[test]
    fn non_power_of_two_is_padded() {
        let frame = vec![Complex64::new(1.0, 0.0); 100];
        let s = spectral(&frame).unwrap();
        assert!(s.centroid.abs() < 0.05);
        assert_eq!(s.papr, 1.0);
    }

    #[test]
    fn bin_frequencies_are_signed() {
        assert_eq!(bin_frequency(0, 8), 0.0);
        assert_eq!(bin_frequency(3, 8), 0.375);
        assert_eq!(bin_frequency(4, 8), -0.5);
        assert_eq!(bin_frequency(7, 8), -0.125);
    }
}
