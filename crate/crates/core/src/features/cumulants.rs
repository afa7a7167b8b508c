//! Second- and fourth-order cumulant estimates of complex baseband frames.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Below this `C21` a frame is treated as silent.
pub const SILENT_POWER: f64 = 1e-12;

pub const CUMULANT_NAMES: [&str; 7] = [
    "cum_c20_abs",
    "cum_c21",
    "cum_c40_abs",
    "cum_c41_abs",
    "cum_c42_abs",
    "cum_c40_norm",
    "cum_c42_norm",
];

/// Sample cumulants of one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cumulants {
    pub c20: Complex64,
    pub c21: f64,
    pub c40: Complex64,
    pub c41: Complex64,
    pub c42: f64,
    pub silent: bool,
}

impl Cumulants {
    pub fn estimate(frame: &[Complex64]) -> Result<Self> {
        if frame.is_empty() {
            return Err(Error::invalid("cumulants of an empty frame"));
        }
        let n = frame.len() as f64;
        let mut m20 = Complex64::new(0.0, 0.0);
        let mut m21 = 0.0;
        let mut m40 = Complex64::new(0.0, 0.0);
        let mut m41 = Complex64::new(0.0, 0.0);
        let mut m42 = 0.0;
        for &x in frame {
            let x2 = x * x;
            let p = x.norm_sqr();
            m20 += x2;
            m21 += p;
            m40 += x2 * x2;
            m41 += x2 * p;
            m42 += p * p;
        }
        m20 /= n;
        m21 /= n;
        m40 /= n;
        m41 /= n;
        m42 /= n;
        let c20 = m20;
        let c21 = m21;
        Ok(Cumulants {
            c20,
            c21,
            c40: m40 - 3.0 * c20 * c20,
            c41: m41 - 3.0 * c20 * c21,
            c42: m42 - c20.norm_sqr() - 2.0 * c21 * c21,
            silent: c21 < SILENT_POWER,
        })
    }

    /// `C40 / C21²` as a complex number (0 for silent frames).
    pub fn c40_norm(&self) -> Complex64 {
        if self.silent {
            Complex64::new(0.0, 0.0)
        } else {
            self.c40 / (self.c21 * self.c21)
        }
    }

    /// `C42 / C21²` (0 for silent frames).
    pub fn c42_norm(&self) -> f64 {
        if self.silent {
            0.0
        } else {
            self.c42 / (self.c21 * self.c21)
        }
    }

    /// Emitted feature values, all invariant to a global phase rotation.
    ///
    /// `cum_c40_norm` is `−|C40|/C21²`: the magnitude carries the sign of the
    /// sub-Gaussian square constellations, whose `C40` is negative real, so
    /// ideal frames map to their textbook values (BPSK −2, QPSK −1, …).
    pub fn features(&self) -> [f64; 7] {
        [
            self.c20.norm(),
            self.c21,
            self.c40.norm(),
            self.c41.norm(),
            self.c42.abs(),
            -self.c40_norm().norm(),
            self.c42_norm(),
        ]
    }
}

pub fn cumulants(frame: &[Complex64]) -> Result<Cumulants> {
    Cumulants::estimate(frame)
}
