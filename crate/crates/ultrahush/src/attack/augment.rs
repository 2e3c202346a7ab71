//! Deployment-condition augmentation: random onset delays, speech volume
//! scaling, and room reverberation. The perturbation path itself stays
//! reverberation-free — the demodulated signal is born at the microphone.

use crate::error::{Error, Result};
use crate::signal::{convolve, Waveform};
use rand::Rng;

/// Delay `p` by `offset` samples: zeros fill the head, the tail is cut so the
/// output length equals the input length.
pub fn shift_by(p: &Waveform, offset: usize) -> Waveform {
    let n = p.len();
    let mut out = vec![0.0; n];
    if offset < n {
        out[offset..].copy_from_slice(&p.samples[..n - offset]);
    }
    Waveform::new(out, p.sample_rate)
}

/// Delay `p` by a uniform random offset in [0, max_ms], inclusive at both
/// ends.
pub fn random_shift<R: Rng>(p: &Waveform, max_ms: f64, rng: &mut R) -> Waveform {
    let max_samples = (max_ms.max(0.0) / 1000.0 * p.sample_rate as f64).round() as usize;
    shift_by(p, rng.gen_range(0..=max_samples))
}

pub(crate) fn draw_beta<R: Rng>(range: (f64, f64), rng: &mut R) -> f64 {
    rng.gen_range(range.0..=range.1)
}

/// Scale the victim speech by a uniform β from `range`. No clipping here —
/// that happens once the mix is formed.
pub fn volume_augment<R: Rng>(x: &Waveform, range: (f64, f64), rng: &mut R) -> Waveform {
    x.scaled(draw_beta(range, rng))
}

/// Convolve speech with a room impulse response, keeping the output at the
/// input's RMS so reverberation never doubles as a volume change.
pub fn rir_augment(x: &Waveform, g: &Waveform) -> Result<Waveform> {
    if g.is_empty() {
        return Err(Error::InvalidArg("empty impulse response".into()));
    }
    if g.sample_rate != x.sample_rate {
        return Err(Error::Shape(format!(
            "impulse response at {} Hz, speech at {} Hz",
            g.sample_rate, x.sample_rate
        )));
    }
    let mut out = convolve(x, &g.samples)?;
    let target = x.rms();
    let got = out.rms();
    if got > 0.0 {
        let fix = target / got;
        for v in &mut out.samples {
            *v *= fix;
        }
    }
    Ok(out)
}
