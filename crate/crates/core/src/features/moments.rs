//! Amplitude, phase and instantaneous-frequency statistics.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Variances below this are treated as zero before dividing.
pub const VARIANCE_FLOOR: f64 = 1e-12;

pub const MOMENT_NAMES: [&str; 12] = [
    "mom_amp_mean",
    "mom_amp_var",
    "mom_amp_skew",
    "mom_amp_kurt",
    "mom_phase_mean",
    "mom_phase_var",
    "mom_phase_skew",
    "mom_phase_kurt",
    "mom_freq_mean",
    "mom_freq_var",
    "mom_freq_skew",
    "mom_freq_kurt",
];

/// Population mean, variance, skewness and excess kurtosis.
///
/// Skewness and kurtosis are 0 when the variance is under [`VARIANCE_FLOOR`];
/// the returned flag reports that case.
pub fn four_moments(values: &[f64]) -> ([f64; 4], bool) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    if m2 < VARIANCE_FLOOR {
        return ([mean, m2, 0.0, 0.0], true);
    }
    ([mean, m2, m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0], false)
}

/// Moments of a frame plus whether its amplitude was (numerically) constant.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentFeatures {
    pub values: [f64; 12],
    pub constant_amplitude: bool,
}

/// Phase of each sample measured from the frame's circular mean direction,
/// in (−π, π]. Rotating the whole frame leaves it unchanged.
pub fn centered_phase(frame: &[Complex64]) -> Vec<f64> {
    let mut mean_dir = Complex64::new(0.0, 0.0);
    for x in frame {
        let r = x.norm();
        if r > 0.0 {
            mean_dir += x / r;
        }
    }
    let reference = if mean_dir.norm() > 0.0 {
        (mean_dir / mean_dir.norm()).conj()
    } else {
        Complex64::new(1.0, 0.0)
    };
    frame.iter().map(|x| (x * reference).arg()).collect()
}

/// Wrapped phase increments `arg(x[n+1]·x*[n])` in (−π, π].
pub fn instantaneous_frequency(frame: &[Complex64]) -> Vec<f64> {
    frame
        .windows(2)
        .map(|w| (w[1] * w[0].conj()).arg())
        .collect()
}

pub fn moments(frame: &[Complex64]) -> Result<MomentFeatures> {
    if frame.len() < 4 {
        return Err(Error::invalid(format!(
            "moment features need at least 4 samples, got {}",
            frame.len()
        )));
    }
    let amp: Vec<f64> = frame.iter().map(|x| x.norm()).collect();
    let (a, constant_amplitude) = four_moments(&amp);
    let (p, _) = four_moments(&centered_phase(frame));
    let (f, _) = four_moments(&instantaneous_frequency(frame));
    let mut values = [0.0; 12];
    values[..4].copy_from_slice(&a);
    values[4..8].copy_from_slice(&p);
    values[8..].copy_from_slice(&f);
    Ok(MomentFeatures {
        values,
        constant_amplitude,
    })
}
