//! Receiver-side defenses and the inaudible-attack detector: bit-depth
//! quantization, energy VAD, band-pass filtering, down-sample-and-recover,
//! plus spectral features and a logistic classifier over them. Defenses apply
//! to the mixed recorded signal, never to the clean speech alone.

mod adaptive;
mod lipread;

pub use adaptive::AdaptiveDefense;
pub use lipread::{
    detect, lipread_features, load_detector, save_detector, train_detector, DetectLabel,
    DetectorModel, DetectorTraining, LipReadFeatures,
};

use crate::error::{Error, Result};
use crate::signal::{apply_filter, resample, FilterSpec, Waveform};

/// One configured defense. Parameters are validated against the documented
/// ranges when the defense is applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DefenseSpec {
    /// Re-quantize to `bits` of signed precision.
    Quantization { bits: u32 },
    /// Drop frames quieter than `threshold_db` relative to the loudest frame.
    Vad { threshold_db: f64 },
    /// Keep only `low_hz`..`high_hz`.
    BandPass { low_hz: f64, high_hz: f64 },
    /// Resample to `factor`× the native rate, then back.
    DownSample { factor: f64 },
}

impl DefenseSpec {
    pub fn kind_label(&self) -> &'static str {
        match self {
            DefenseSpec::Quantization { .. } => "quantization",
            DefenseSpec::Vad { .. } => "vad",
            DefenseSpec::BandPass { .. } => "band_pass",
            DefenseSpec::DownSample { .. } => "down_sample",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DefenseSpec::Quantization { bits } => {
                if !(2..=16).contains(&bits) {
                    return Err(Error::InvalidArg(format!("quantization bits {bits} outside 2..=16")));
                }
            }
            DefenseSpec::Vad { threshold_db } => {
                if !(threshold_db.is_finite() && threshold_db < 0.0) {
                    return Err(Error::InvalidArg(format!(
                        "vad threshold {threshold_db} dB must be finite and negative"
                    )));
                }
            }
            DefenseSpec::BandPass { low_hz, high_hz } => {
                if !(low_hz > 0.0 && high_hz > low_hz && high_hz.is_finite()) {
                    return Err(Error::InvalidArg(format!(
                        "band-pass {low_hz}..{high_hz} Hz is not an increasing positive range"
                    )));
                }
            }
            DefenseSpec::DownSample { factor } => {
                if !(factor > 0.0 && factor <= 1.0) {
                    return Err(Error::InvalidArg(format!("rate factor {factor} outside (0, 1]")));
                }
            }
        }
        Ok(())
    }
}

/// Round onto a symmetric `bits`-deep grid over [-1, 1]: x →
/// round(x·q)/q with q = 2^{bits-1}−1, half-way cases away from zero,
/// results clamped to full scale.
pub fn quantize(w: &Waveform, bits: u32) -> Result<Waveform> {
    DefenseSpec::Quantization { bits }.validate()?;
    let q = ((1u32 << (bits - 1)) - 1) as f64;
    let samples = w.samples.iter().map(|&x| (x * q).round().clamp(-q, q) / q).collect();
    Ok(Waveform::new(samples, w.sample_rate))
}

const VAD_FRAME_S: f64 = 0.025;
const VAD_HOP_S: f64 = 0.010;

/// Energy VAD: 25 ms frames on a 10 ms hop, RMS in dB relative to the loudest
/// frame, hops whose frame falls below `threshold_db` are deleted and the
/// survivors concatenated. Pure silence trims to an empty waveform.
pub fn vad_trim(w: &Waveform, threshold_db: f64) -> Result<Waveform> {
    DefenseSpec::Vad { threshold_db }.validate()?;
    if w.is_empty() {
        return Err(Error::InvalidArg("vad_trim: empty input".into()));
    }
    let rate = w.sample_rate as f64;
    let frame = (VAD_FRAME_S * rate).round() as usize;
    let hop = (VAD_HOP_S * rate).round().max(1.0) as usize;
    let starts: Vec<usize> = (0..w.len()).step_by(hop).collect();
    let frame_rms: Vec<f64> = starts
        .iter()
        .map(|&t| {
            let seg = &w.samples[t..(t + frame).min(w.len())];
            (seg.iter().map(|x| x * x).sum::<f64>() / seg.len() as f64).sqrt()
        })
        .collect();
    let reference = frame_rms.iter().fold(0.0f64, |a, &b| a.max(b));
    if reference == 0.0 {
        return Ok(Waveform::new(Vec::new(), w.sample_rate));
    }
    let mut kept = Vec::new();
    for (&t, &rms) in starts.iter().zip(&frame_rms) {
        let db = 20.0 * (rms / reference).max(1e-300).log10();
        if db >= threshold_db {
            kept.extend_from_slice(&w.samples[t..(t + hop).min(w.len())]);
        }
    }
    Ok(Waveform::new(kept, w.sample_rate))
}

/// Band-pass the recording (zero-phase order-6 Butterworth).
pub fn bandpass_defense(w: &Waveform, low_hz: f64, high_hz: f64) -> Result<Waveform> {
    DefenseSpec::BandPass { low_hz, high_hz }.validate()?;
    apply_filter(w, &FilterSpec::band_pass(low_hz, high_hz))
}

/// Resample to `factor`× the native rate and back, discarding everything the
/// reduced Nyquist cannot carry.
pub fn downsample_defense(w: &Waveform, factor: f64) -> Result<Waveform> {
    DefenseSpec::DownSample { factor }.validate()?;
    let reduced = (factor * w.sample_rate as f64).round().max(1.0) as u32;
    let down = resample(w, reduced)?;
    resample(&down, w.sample_rate)
}

/// Apply any configured defense to a recording.
pub fn apply_defense(spec: &DefenseSpec, w: &Waveform) -> Result<Waveform> {
    match *spec {
        DefenseSpec::Quantization { bits } => quantize(w, bits),
        DefenseSpec::Vad { threshold_db } => vad_trim(w, threshold_db),
        DefenseSpec::BandPass { low_hz, high_hz } => bandpass_defense(w, low_hz, high_hz),
        DefenseSpec::DownSample { factor } => downsample_defense(w, factor),
    }
}
