use std::io::Write;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::channel::{apply_channel, ChannelConfig};
use super::constellation::modulate;
use crate::domain::{Domain, Modulation};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub samples: Vec<Complex64>,
    pub label: Modulation,
    pub domain: Domain,
}

/// Equal-length received frames with class labels and domain tags.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSet {
    pub frames: Vec<Frame>,
    pub frame_length: usize,
}

impl FrameSet {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Debug export: one row per frame, interleaved `i0,q0,i1,q1,…` then
    /// `label,domain`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = Vec::with_capacity(2 * self.frame_length + 2);
        for n in 0..self.frame_length {
            header.push(format!("i{n}"));
            header.push(format!("q{n}"));
        }
        header.push("label".into());
        header.push("domain".into());
        w.write_record(&header)?;
        for f in &self.frames {
            let mut rec: Vec<String> = Vec::with_capacity(header.len());
            for s in &f.samples {
                rec.push(s.re.to_string());
                rec.push(s.im.to_string());
            }
            rec.push(f.label.name().into());
            rec.push(f.domain.name().into());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Balanced frame set: `per_class` frames of every modulation, class-major
/// order, deterministic under `config.seed`.
pub fn gen_frameset(per_class: usize, frame_length: usize, config: &ChannelConfig) -> Result<FrameSet> {
    if per_class == 0 {
        return Err(Error::invalid("per_class must be at least 1"));
    }
    if frame_length == 0 {
        return Err(Error::invalid("frame_length must be at least 1"));
    }
    config.validate()?;
    let domain = config.domain().ok_or_else(|| {
        Error::invalid("frame sets need a fading domain (rayleigh or rician), not awgn_only")
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut frames = Vec::with_capacity(per_class * Modulation::ALL.len());
    for label in Modulation::ALL {
        for _ in 0..per_class {
            let tx = modulate(label, frame_length, &mut rng)?;
            let samples = apply_channel(&tx, config, &mut rng)?;
            frames.push(Frame {
                samples,
                label,
                domain,
            });
        }
    }
    Ok(FrameSet {
        frames,
        frame_length,
    })
}
