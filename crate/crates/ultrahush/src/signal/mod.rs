//! Foundational DSP primitives shared by every other module: waveforms,
//! FFT-based convolution, Hilbert transform, band-limited resampling,
//! Butterworth/FIR filtering, WAV I/O and audio metrics.
//!
//! All arithmetic is f64; WAV files may be PCM16 or float32 mono.

mod fft;
mod filter;
mod resample;
mod wav;

pub use fft::{
    band_power, convolve, convolve_full, fft_complex, hilbert_conjugate, ifft_complex,
    power_spectrum, tone_amplitude, welch_psd,
};
pub use filter::{
    apply_filter, bp_biquad, butterworth_sections, design_fir, filtfilt, fir_centered,
    fir_centered_adjoint, Biquad, FilterKind, FilterSpec, FirRealization,
};
pub(crate) use resample::out_len as resample_out_len;
pub use resample::{resample, resample_adjoint};
pub use wav::{read_wav, write_wav, SampleFormat};

use crate::error::{Error, Result};

/// A mono audio buffer with its sample rate. Samples are dimensionless
/// normalized full-scale amplitudes; operations documented as "clipping"
/// guarantee [-1, 1], everything else may exceed it.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        assert!(sample_rate > 0, "sample_rate must be positive");
        Waveform { samples, sample_rate }
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Waveform::new(vec![0.0; len], sample_rate)
    }

    /// Pure tone `amp·sin(2πft + phase)`, usually a test probe.
    pub fn tone(freq: f64, amp: f64, dur_s: f64, sample_rate: u32, phase: f64) -> Self {
        let n = (dur_s * sample_rate as f64).round() as usize;
        let w = 2.0 * std::f64::consts::PI * freq / sample_rate as f64;
        let samples = (0..n).map(|i| amp * (w * i as f64 + phase).sin()).collect();
        Waveform::new(samples, sample_rate)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        (self.samples.iter().map(|x| x * x).sum::<f64>() / self.samples.len() as f64).sqrt()
    }

    pub fn scaled(&self, gain: f64) -> Waveform {
        Waveform::new(self.samples.iter().map(|x| x * gain).collect(), self.sample_rate)
    }

    /// Hard-clip into [-1, 1].
    pub fn clipped(&self) -> Waveform {
        Waveform::new(
            self.samples.iter().map(|x| x.clamp(-1.0, 1.0)).collect(),
            self.sample_rate,
        )
    }

    pub fn require_finite(&self, what: &str) -> Result<()> {
        if self.samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::Divergence(format!("{what}: non-finite sample")));
        }
        Ok(())
    }
}

/// 10·log10(P_ref / P_pert) with ±infinity sentinels for zero-power inputs.
pub fn snr_db(reference: &Waveform, perturbation: &Waveform) -> Result<f64> {
    if reference.len() != perturbation.len() {
        return Err(Error::Shape(format!(
            "snr_db length mismatch: {} vs {}",
            reference.len(),
            perturbation.len()
        )));
    }
    let p_ref = reference.rms().powi(2);
    let p_pert = perturbation.rms().powi(2);
    if p_pert == 0.0 {
        return Ok(f64::INFINITY);
    }
    if p_ref == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(10.0 * (p_ref / p_pert).log10())
}

/// Sum of squared samples.
pub fn l2_distortion(perturbation: &Waveform) -> f64 {
    perturbation.samples.iter().map(|x| x * x).sum()
}

/// Units of a spectrogram-like matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectroUnits {
    Power,
    LogPower,
    LogMel,
}

/// Frames × bins matrix of real values plus framing parameters.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    pub data: Vec<f64>, // row-major frames × bins
    pub frames: usize,
    pub bins: usize,
    pub window_len: usize,
    pub hop: usize,
    pub units: SpectroUnits,
}

impl Spectrogram {
    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}
