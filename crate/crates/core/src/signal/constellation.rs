//! Unit-average-power constellations for the five modulation classes.
//!
//! QAM points use a square grid of odd levels `{±1, ±3, …}` on each rail,
//! Gray-coded per rail and scaled by `1/√(2(M−1)/3)` so the mean of `|p|²`
//! over all `M` points is one.

use num_complex::Complex64;
use rand::Rng;

use crate::domain::Modulation;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    pub modulation: Modulation,
    /// Indexed by the symbol's bit pattern.
    pub points: Vec<Complex64>,
    pub bits_per_symbol: u32,
}

fn gray_to_binary(mut g: u32) -> u32 {
    let mut mask = g >> 1;
    while mask != 0 {
        g ^= mask;
        mask >>= 1;
    }
    g
}

/// Maps `bits` Gray-coded bits to one of `2^bits` odd amplitude levels.
fn gray_level(code: u32, bits: u32) -> f64 {
    let levels = 1u32 << bits;
    let idx = gray_to_binary(code);
    (2 * idx) as f64 - (levels - 1) as f64
}

impl Constellation {
    pub fn new(modulation: Modulation) -> Self {
        let bits = modulation.bits_per_symbol();
        let points = match modulation {
            Modulation::Bpsk => vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)],
            _ => {
                let rail_bits = bits / 2;
                let m = 1u32 << bits;
                let scale = 1.0 / (2.0 * (m as f64 - 1.0) / 3.0).sqrt();
                (0..m)
                    .map(|sym| {
                        let i_code = sym >> rail_bits;
                        let q_code = sym & ((1 << rail_bits) - 1);
                        Complex64::new(
                            gray_level(i_code, rail_bits) * scale,
                            gray_level(q_code, rail_bits) * scale,
                        )
                    })
                    .collect()
            }
        };
        Constellation {
            modulation,
            points,
            bits_per_symbol: bits,
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        Ok(Self::new(name.parse()?))
    }

    pub fn mean_power(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.points.len() as f64
    }
}

/// Draws `num_symbols` i.i.d. uniform symbols from the constellation.
pub fn modulate<R: Rng + ?Sized>(
    modulation: Modulation,
    num_symbols: usize,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    if num_symbols == 0 {
        return Err(crate::Error::invalid("modulate needs at least one symbol"));
    }
    let c = Constellation::new(modulation);
    let m = c.points.len();
    Ok((0..num_symbols)
        .map(|_| c.points[rng.random_range(0..m)])
        .collect())
}
