//! Log-mel front end with an exact gradient pullback to the raw samples.

use crate::error::{Error, Result};
use crate::signal::{fft_complex, Waveform};
use rustfft::num_complex::Complex;
use std::sync::OnceLock;

pub const FEATURE_RATE: u32 = 16000;
pub const FEATURE_WINDOW: usize = 400;
pub const FEATURE_HOP: usize = 160;
pub const NUM_MELS: usize = 40;
const NFFT: usize = 512;
const NBINS: usize = NFFT / 2 + 1;
const LOG_FLOOR: f64 = 1e-8;

/// Frames × mels, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub frames: usize,
    pub mels: usize,
    pub data: Vec<f64>,
}

impl Spectrogram {
    pub fn zeros(frames: usize, mels: usize) -> Self {
        Spectrogram { frames, mels, data: vec![0.0; frames * mels] }
    }

    pub fn at(&self, frame: usize, mel: usize) -> f64 {
        self.data[frame * self.mels + mel]
    }

    pub fn row(&self, frame: usize) -> &[f64] {
        &self.data[frame * self.mels..(frame + 1) * self.mels]
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters as sparse (bin, weight) lists, unit peak, spanning
/// 0 Hz to Nyquist on the mel scale.
fn filterbank() -> &'static Vec<Vec<(usize, f64)>> {
    static BANK: OnceLock<Vec<Vec<(usize, f64)>>> = OnceLock::new();
    BANK.get_or_init(|| {
        let nyq = FEATURE_RATE as f64 / 2.0;
        let top = hz_to_mel(nyq);
        let pts: Vec<f64> = (0..NUM_MELS + 2)
            .map(|i| mel_to_hz(top * i as f64 / (NUM_MELS + 1) as f64))
            .collect();
        let bin_hz = FEATURE_RATE as f64 / NFFT as f64;
        (0..NUM_MELS)
            .map(|m| {
                let (lo, mid, hi) = (pts[m], pts[m + 1], pts[m + 2]);
                let mut taps = Vec::new();
                for k in 0..NBINS {
                    let f = k as f64 * bin_hz;
                    let w = if f <= mid { (f - lo) / (mid - lo) } else { (hi - f) / (hi - mid) };
                    if w > 0.0 {
                        taps.push((k, w));
                    }
                }
                taps
            })
            .collect()
    })
}

fn hann() -> &'static [f64; FEATURE_WINDOW] {
    static WIN: OnceLock<[f64; FEATURE_WINDOW]> = OnceLock::new();
    WIN.get_or_init(|| {
        let mut w = [0.0; FEATURE_WINDOW];
        for (n, v) in w.iter_mut().enumerate() {
            *v = 0.5 * (1.0 - (2.0 * std::f64::consts::PI * n as f64 / FEATURE_WINDOW as f64).cos());
        }
        w
    })
}

pub fn num_frames(len: usize) -> Result<usize> {
    if len < FEATURE_WINDOW {
        return Err(Error::Shape(format!(
            "input of {len} samples is shorter than one {FEATURE_WINDOW}-sample analysis window"
        )));
    }
    Ok((len - FEATURE_WINDOW) / FEATURE_HOP + 1)
}

fn frame_spectrum(samples: &[f64], start: usize) -> Vec<Complex<f64>> {
    let win = hann();
    let mut buf = vec![Complex::new(0.0, 0.0); NFFT];
    for n in 0..FEATURE_WINDOW {
        buf[n] = Complex::new(samples[start + n] * win[n], 0.0);
    }
    fft_complex(&mut buf);
    buf
}

/// Log-mel spectrogram: ln(mel-power + 1e-8), 25 ms Hann window, 10 ms hop.
pub fn featurize(w: &Waveform) -> Result<Spectrogram> {
    if w.sample_rate != FEATURE_RATE {
        return Err(Error::Shape(format!("featurizer expects {FEATURE_RATE} Hz, got {}", w.sample_rate)));
    }
    let frames = num_frames(w.len())?;
    let bank = filterbank();
    let mut out = Spectrogram::zeros(frames, NUM_MELS);
    for t in 0..frames {
        let spec = frame_spectrum(&w.samples, t * FEATURE_HOP);
        let power: Vec<f64> = spec[..NBINS].iter().map(|v| v.norm_sqr()).collect();
        for (m, taps) in bank.iter().enumerate() {
            let p: f64 = taps.iter().map(|&(k, wt)| wt * power[k]).sum();
            out.data[t * NUM_MELS + m] = (p + LOG_FLOOR).ln();
        }
    }
    Ok(out)
}

/// Exact adjoint of `featurize`: map a gradient over the log-mel output back
/// to a gradient over the input samples. Samples never covered by a window
/// (the final partial hop) get exactly zero.
pub fn featurize_pullback(w: &Waveform, grad: &Spectrogram) -> Result<Vec<f64>> {
    let frames = num_frames(w.len())?;
    if grad.frames != frames || grad.mels != NUM_MELS {
        return Err(Error::Shape(format!(
            "gradient is {}×{} but features are {frames}×{NUM_MELS}",
            grad.frames, grad.mels
        )));
    }
    let bank = filterbank();
    let win = hann();
    let mut out = vec![0.0; w.len()];
    for t in 0..frames {
        let start = t * FEATURE_HOP;
        let spec = frame_spectrum(&w.samples, start);
        // d loss / d |X_k|^2, folded through the mel triangles and the log
        let mut gpow = vec![0.0; NBINS];
        for (m, taps) in bank.iter().enumerate() {
            let p: f64 = taps.iter().map(|&(k, wt)| wt * spec[k].norm_sqr()).sum();
            let gl = grad.data[t * NUM_MELS + m] / (p + LOG_FLOOR);
            for &(k, wt) in taps {
                gpow[k] += gl * wt;
            }
        }
        // d|X_k|^2/dx_n = 2·Re(conj(X_k)·e^{-2πikn/N})·win_n, so the sum over
        // bins is one more forward FFT of 2·gpow_k·conj(X_k)
        let mut c = vec![Complex::new(0.0, 0.0); NFFT];
        for k in 0..NBINS {
            c[k] = spec[k].conj() * (2.0 * gpow[k]);
        }
        fft_complex(&mut c);
        for n in 0..FEATURE_WINDOW {
            out[start + n] += win[n] * c[n].re;
        }
    }
    Ok(out)
}
