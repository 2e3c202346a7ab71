//! Exponential sine sweeps and impulse-response estimation.
//!
//! The sweep's exponential phase makes every harmonic-distortion product of
//! the channel land at a *negative* lag after deconvolution (each order k
//! arrives L·ln k seconds early — a phase property of the matched inverse,
//! conj(X)), so windowing the result from lag zero onward keeps only the
//! linear response. The inverse is applied in the frequency domain as
//! conj(X)/(|X|² + λ) with a small relative floor λ: wherever the sweep has
//! any energy at all the division is exact, so deconvolving a recording by
//! its own sweep is the identity, while the floor stops empty bins from
//! amplifying measurement noise.

use super::ChannelResponse;
use crate::error::{Error, Result};
use crate::signal::{fft_complex, ifft_complex, Waveform};
use rustfft::num_complex::Complex;

/// Relative spectral floor: bins below this fraction of the sweep's peak
/// magnitude stop being inverted and fade to zero gain instead.
const REG_FLOOR_REL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSpec {
    pub f1_hz: f64,
    pub f2_hz: f64,
    pub duration_s: f64,
    pub rate: u32,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec { f1_hz: 50.0, f2_hz: 7800.0, duration_s: 10.0, rate: 16000 }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        let nyq = self.rate as f64 / 2.0;
        if !(self.f1_hz > 0.0 && self.f1_hz < self.f2_hz && self.f2_hz < nyq) {
            return Err(Error::InvalidArg(format!(
                "sweep band {}..{} Hz invalid at rate {}",
                self.f1_hz, self.f2_hz, self.rate
            )));
        }
        if self.duration_s <= 0.0 {
            return Err(Error::InvalidArg("sweep duration must be positive".into()));
        }
        Ok(())
    }

    pub fn num_samples(&self) -> usize {
        (self.duration_s * self.rate as f64).round() as usize
    }

    /// Time constant L: instantaneous frequency is f1·e^{t/L}.
    fn l_const(&self) -> f64 {
        self.duration_s / (self.f2_hz / self.f1_hz).ln()
    }

    /// x(t) = sin(2π·f1·L·(e^{t/L} − 1)), constant unit amplitude.
    pub fn render(&self) -> Result<Waveform> {
        self.validate()?;
        let l = self.l_const();
        let k = 2.0 * std::f64::consts::PI * self.f1_hz * l;
        let samples = (0..self.num_samples())
            .map(|i| {
                let t = i as f64 / self.rate as f64;
                (k * ((t / l).exp() - 1.0)).sin()
            })
            .collect();
        Ok(Waveform::new(samples, self.rate))
    }

}

/// Deconvolve a recorded sweep into the channel's impulse response.
///
/// `recorded` must be the capture of this sweep through the channel under
/// test, same rate and length. The result window starts at lag zero;
/// harmonic distortion falls at negative lags (which wrap to the far end of
/// the deconvolution buffer) and is excluded by the truncation to `taps`.
pub fn estimate_response(
    recorded: &Waveform,
    spec: &SweepSpec,
    taps: usize,
    angle_deg: f64,
    d_ref_m: f64,
) -> Result<ChannelResponse> {
    spec.validate()?;
    if recorded.sample_rate != spec.rate || recorded.len() != spec.num_samples() {
        return Err(Error::Shape(format!(
            "recording {} samples at {} Hz does not match sweep {} samples at {} Hz",
            recorded.len(),
            recorded.sample_rate,
            spec.num_samples(),
            spec.rate
        )));
    }
    if recorded.rms() < 1e-6 {
        return Err(Error::InvalidArg("recording is silent; measurement failed".into()));
    }
    let sweep = spec.render()?;
    let n = sweep.len();
    let size = (2 * n).next_power_of_two();

    let mut x: Vec<Complex<f64>> = sweep.samples.iter().map(|&v| Complex::new(v, 0.0)).collect();
    x.resize(size, Complex::new(0.0, 0.0));
    fft_complex(&mut x);
    let mut r: Vec<Complex<f64>> = recorded.samples.iter().map(|&v| Complex::new(v, 0.0)).collect();
    r.resize(size, Complex::new(0.0, 0.0));
    fft_complex(&mut r);

    let peak2 = x.iter().map(|v| v.norm_sqr()).fold(0.0f64, f64::max);
    let floor = peak2 * REG_FLOOR_REL * REG_FLOOR_REL;
    for (h, xv) in r.iter_mut().zip(&x) {
        *h = *h * xv.conj() / (xv.norm_sqr() + floor);
    }
    ifft_complex(&mut r);

    let h = (0..taps).map(|k| r.get(k).map_or(0.0, |v| v.re)).collect();
    Ok(ChannelResponse { taps: h, angle_deg, d_ref_m, adc_rate: spec.rate })
}
