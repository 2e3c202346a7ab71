//! Amplitude modulation onto the ultrasonic carrier: double-sideband and
//! single-sideband (Hilbert-based) variants.

use super::ChannelScene;
use crate::error::{Error, Result};
use crate::signal::{hilbert_conjugate, resample, Waveform};

/// Fixed modulation depth: s(t) = A·(1+m)·cos with A = 1/2 keeps the peak at
/// or below full scale for any |m| ≤ 1 *independently of the content*, so the
/// channel gain seen by a sweep and by speech is identical.
pub const MOD_DEPTH: f64 = 0.5;

/// Emitter turn-on/off ramp. An instantaneous carrier start is a broadband
/// click that would leak into the audible band; every modulator output gets a
/// raised-cosine fade of this length at both ends.
pub const EMIT_TAPER_S: f64 = 0.002;

/// In-place raised-cosine fade-in/out over [`EMIT_TAPER_S`] at each end.
pub fn edge_taper(samples: &mut [f64], rate: u32) {
    let n = ((EMIT_TAPER_S * rate as f64).round() as usize).min(samples.len() / 2);
    let len = samples.len();
    for i in 0..n {
        let u = (i as f64 + 0.5) / n as f64;
        let w = 0.5 * (1.0 - (std::f64::consts::PI * u).cos());
        samples[i] *= w;
        samples[len - 1 - i] *= w;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModScheme {
    Dsb,
    Usb,
    Lsb,
}

/// A carrier-band waveform at ultra_rate ready for the oracle.
#[derive(Debug, Clone)]
pub struct ModulatedSignal {
    pub wave: Waveform,
    pub scheme: ModScheme,
    pub carrier_hz: f64,
    pub depth: f64,
}

impl ModulatedSignal {
    pub fn scaled(&self, gain: f64) -> ModulatedSignal {
        ModulatedSignal {
            wave: self.wave.scaled(gain),
            scheme: self.scheme,
            carrier_hz: self.carrier_hz,
            depth: self.depth * gain,
        }
    }
}

fn check_baseband(m: &Waveform, scene: &ChannelScene) -> Result<()> {
    scene.validate()?;
    if m.peak() > 1.0 + 1e-9 {
        return Err(Error::InvalidArg(format!(
            "baseband peak {} exceeds full scale",
            m.peak()
        )));
    }
    Ok(())
}

/// s(t) = A·(1 + m(t))·cos(2π·carrier·t), peak ≤ 1.
pub fn modulate_dsb(m: &Waveform, scene: &ChannelScene) -> Result<ModulatedSignal> {
    check_baseband(m, scene)?;
    let up = resample(m, scene.ultra_rate)?;
    let w = 2.0 * std::f64::consts::PI * scene.carrier_hz / scene.ultra_rate as f64;
    let mut samples: Vec<f64> = up
        .samples
        .iter()
        .enumerate()
        .map(|(i, &x)| (MOD_DEPTH * (1.0 + x) * (w * i as f64).cos()).clamp(-1.0, 1.0))
        .collect();
    edge_taper(&mut samples, scene.ultra_rate);
    Ok(ModulatedSignal {
        wave: Waveform::new(samples, scene.ultra_rate),
        scheme: ModScheme::Dsb,
        carrier_hz: scene.carrier_hz,
        depth: MOD_DEPTH,
    })
}

/// Single-sideband: upper = m·cos − m̂·sin + cos, lower = m·cos + m̂·sin + cos,
/// normalized to peak ≤ 1 (depth stays at 1/2 unless the envelope demands less).
pub fn modulate_ssb(m: &Waveform, scene: &ChannelScene, upper: bool) -> Result<ModulatedSignal> {
    check_baseband(m, scene)?;
    let mh = hilbert_conjugate(m);
    let up = resample(m, scene.ultra_rate)?;
    let uph = resample(&mh, scene.ultra_rate)?;
    let w = 2.0 * std::f64::consts::PI * scene.carrier_hz / scene.ultra_rate as f64;
    let sign = if upper { -1.0 } else { 1.0 };
    let raw: Vec<f64> = up
        .samples
        .iter()
        .zip(&uph.samples)
        .enumerate()
        .map(|(i, (&x, &xh))| {
            let ph = w * i as f64;
            (1.0 + x) * ph.cos() + sign * xh * ph.sin()
        })
        .collect();
    let peak = raw.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let depth = if peak > 0.0 { MOD_DEPTH.min(1.0 / peak) } else { MOD_DEPTH };
    let mut samples: Vec<f64> = raw.iter().map(|&x| (depth * x).clamp(-1.0, 1.0)).collect();
    edge_taper(&mut samples, scene.ultra_rate);
    Ok(ModulatedSignal {
        wave: Waveform::new(samples, scene.ultra_rate),
        scheme: if upper { ModScheme::Usb } else { ModScheme::Lsb },
        carrier_hz: scene.carrier_hz,
        depth,
    })
}
