//! FFT helpers built on rustfft: linear convolution, Hilbert transform and
//! spectrum measurements used as oracles throughout the test suite.

use std::cell::RefCell;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::Waveform;
use crate::error::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan_forward(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

fn plan_inverse(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n))
}

/// In-place forward FFT (no normalization).
pub fn fft_complex(buf: &mut [Complex<f64>]) {
    plan_forward(buf.len()).process(buf);
}

/// In-place inverse FFT, normalized by 1/N.
pub fn ifft_complex(buf: &mut [Complex<f64>]) {
    plan_inverse(buf.len()).process(buf);
    let scale = 1.0 / buf.len() as f64;
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

fn next_pow2(n: usize) -> usize {
    n.next_power_of_two()
}

/// Full linear convolution, output length a + b − 1. FFT path above a small
/// size threshold, direct otherwise.
pub fn convolve_full(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    if a.len().min(b.len()) <= 32 || out_len <= 256 {
        let mut out = vec![0.0; out_len];
        for (i, &x) in a.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (j, &y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        return out;
    }
    let n = next_pow2(out_len);
    let mut fa: Vec<Complex<f64>> = a.iter().map(|&x| Complex::new(x, 0.0)).collect();
    fa.resize(n, Complex::new(0.0, 0.0));
    let mut fb: Vec<Complex<f64>> = b.iter().map(|&x| Complex::new(x, 0.0)).collect();
    fb.resize(n, Complex::new(0.0, 0.0));
    fft_complex(&mut fa);
    fft_complex(&mut fb);
    for (x, y) in fa.iter_mut().zip(fb.iter()) {
        *x *= *y;
    }
    ifft_complex(&mut fa);
    fa.truncate(out_len);
    fa.iter().map(|c| c.re).collect()
}

/// Linear convolution truncated to len(w): the tail beyond the input length is
/// discarded so mixing shapes stay aligned with fixed-length carriers.
pub fn convolve(w: &Waveform, h: &[f64]) -> Result<Waveform> {
    if h.is_empty() {
        return Err(Error::InvalidArg("convolve: empty impulse response".into()));
    }
    let mut full = convolve_full(&w.samples, h);
    full.truncate(w.len());
    Ok(Waveform::new(full, w.sample_rate))
}

/// Hilbert transform via the analytic signal: for cos input returns sin at the
/// same frequency and amplitude (interior samples; edges taper for
/// non-periodic content).
pub fn hilbert_conjugate(w: &Waveform) -> Waveform {
    let n = w.len();
    if n == 0 {
        return w.clone();
    }
    let m = next_pow2(n);
    let mut buf: Vec<Complex<f64>> = w.samples.iter().map(|&x| Complex::new(x, 0.0)).collect();
    buf.resize(m, Complex::new(0.0, 0.0));
    fft_complex(&mut buf);
    // analytic-signal spectrum: keep DC and Nyquist, double positives, zero negatives
    for k in 1..m / 2 {
        buf[k] *= 2.0;
    }
    for v in buf.iter_mut().skip(m / 2 + 1) {
        *v = Complex::new(0.0, 0.0);
    }
    ifft_complex(&mut buf);
    let samples = buf[..n].iter().map(|c| c.im).collect();
    Waveform::new(samples, w.sample_rate)
}

/// Power spectrum |X|² of the whole buffer, one-sided (bins 0..=N/2),
/// rectangular window. Bin k corresponds to k·rate/N Hz.
pub fn power_spectrum(w: &Waveform) -> Vec<f64> {
    let n = w.len();
    let mut buf: Vec<Complex<f64>> = w.samples.iter().map(|&x| Complex::new(x, 0.0)).collect();
    fft_complex(&mut buf);
    buf[..=n / 2].iter().map(|c| c.norm_sqr()).collect()
}

/// Amplitude of the component at `freq`, measured by complex projection over
/// an integer number of cycles (exact for steady tones).
pub fn tone_amplitude(w: &Waveform, freq: f64) -> f64 {
    let rate = w.sample_rate as f64;
    let cycles = (w.len() as f64 * freq / rate).floor().max(1.0);
    let len = ((cycles * rate / freq).round() as usize).min(w.len());
    if len == 0 {
        return 0.0;
    }
    let wstep = 2.0 * std::f64::consts::PI * freq / rate;
    let (mut re, mut im) = (0.0f64, 0.0f64);
    for (i, &x) in w.samples[..len].iter().enumerate() {
        let ph = wstep * i as f64;
        re += x * ph.cos();
        im += x * ph.sin();
    }
    2.0 * (re * re + im * im).sqrt() / len as f64
}

/// Welch PSD: Hann-windowed segments of `nfft` samples, 50% overlap, averaged
/// one-sided periodograms. Normalized so the bins sum to the mean-square power
/// (same convention as `band_power`); bin k sits at k·rate/nfft Hz. The input
/// must cover at least one full segment.
pub fn welch_psd(w: &Waveform, nfft: usize) -> Result<Vec<f64>> {
    if nfft < 16 {
        return Err(Error::InvalidArg("welch_psd: nfft too small".into()));
    }
    if w.len() < nfft {
        return Err(Error::InvalidArg(format!(
            "welch_psd: {} samples < one {nfft}-sample segment",
            w.len()
        )));
    }
    let hann: Vec<f64> = (0..nfft)
        .map(|i| {
            let ph = std::f64::consts::PI * i as f64 / nfft as f64;
            ph.sin() * ph.sin()
        })
        .collect();
    let win_energy: f64 = hann.iter().map(|v| v * v).sum();
    let hop = nfft / 2;
    let mut psd = vec![0.0; nfft / 2 + 1];
    let mut segments = 0usize;
    let mut start = 0usize;
    while start + nfft <= w.len() {
        let mut buf: Vec<Complex<f64>> = w.samples[start..start + nfft]
            .iter()
            .zip(&hann)
            .map(|(&x, &h)| Complex::new(x * h, 0.0))
            .collect();
        fft_complex(&mut buf);
        for (k, p) in psd.iter_mut().enumerate() {
            *p += buf[k].norm_sqr();
        }
        segments += 1;
        start += hop;
    }
    let norm = 1.0 / (segments as f64 * nfft as f64 * win_energy);
    for (k, p) in psd.iter_mut().enumerate() {
        let one_sided = if k == 0 || k == nfft / 2 { 1.0 } else { 2.0 };
        *p *= one_sided * norm;
    }
    Ok(psd)
}

/// Mean-square power inside [f_lo, f_hi] (one-sided, DC and Nyquist owned by
/// their exact frequencies).
pub fn band_power(w: &Waveform, f_lo: f64, f_hi: f64) -> f64 {
    let n = w.len();
    if n == 0 {
        return 0.0;
    }
    let spec = power_spectrum(w);
    let rate = w.sample_rate as f64;
    let df = rate / n as f64;
    let mut acc = 0.0;
    for (k, &p) in spec.iter().enumerate() {
        let f = k as f64 * df;
        if f < f_lo || f > f_hi {
            continue;
        }
        // one-sided: interior bins carry both halves of the spectrum
        let w2 = if k == 0 || (n % 2 == 0 && k == n / 2) { 1.0 } else { 2.0 };
        acc += w2 * p;
    }
    acc / (n as f64 * n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct_conv(a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; a.len() + b.len() - 1];
        for (i, &x) in a.iter().enumerate() {
            for (j, &y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        out
    }

    fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
        num / den.max(1e-300)
    }

    #[test]
    fn convolve_with_unit_impulse_is_identity() {
        let w = Waveform::tone(700.0, 0.8, 0.05, 16000, 0.4);
        let out = convolve(&w, &[1.0]).unwrap();
        assert!(rel_l2(&out.samples, &w.samples) < 1e-12);
    }

    #[test]
    fn unit_impulse_convolved_with_h_is_h() {
        let h = vec![0.5, -0.25, 0.125, 0.0625];
        let mut imp = vec![0.0; 16];
        imp[0] = 1.0;
        let out = convolve(&Waveform::new(imp, 16000), &h).unwrap();
        assert!(rel_l2(&out.samples[..4], &h) < 1e-12);
        assert!(out.samples[4..].iter().all(|&x| x.abs() < 1e-12));
    }

    #[test]
    fn fft_convolution_matches_direct_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let a: Vec<f64> = (0..16000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let fft_out = convolve_full(&a, &h);
        let direct = direct_conv(&a, &h);
        assert!(rel_l2(&fft_out, &direct) < 1e-9);
    }

    #[test]
    fn convolve_is_linear() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..512).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..512).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h: Vec<f64> = (0..33).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (a, b) = (0.7, -1.3);
        let mixed: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
        let lhs = convolve(&Waveform::new(mixed, 16000), &h).unwrap();
        let cx = convolve(&Waveform::new(x, 16000), &h).unwrap();
        let cy = convolve(&Waveform::new(y, 16000), &h).unwrap();
        let rhs: Vec<f64> = cx.samples.iter().zip(&cy.samples).map(|(u, v)| a * u + b * v).collect();
        assert!(rel_l2(&lhs.samples, &rhs) < 1e-9);
    }

    #[test]
    fn hilbert_of_cos_is_sin() {
        let rate = 16000;
        let n = 16000;
        let w = 2.0 * std::f64::consts::PI * 1000.0 / rate as f64;
        let cosw = Waveform::new((0..n).map(|i| (w * i as f64).cos()).collect(), rate);
        let h = hilbert_conjugate(&cosw);
        let interior = 2000..n - 2000;
        let mut max_err = 0.0f64;
        for i in interior {
            max_err = max_err.max((h.samples[i] - (w * i as f64).sin()).abs());
        }
        assert!(max_err < 1e-3, "max interior error {max_err}");
    }

    #[test]
    fn hilbert_of_zero_is_zero() {
        let z = Waveform::zeros(1024, 16000);
        assert!(hilbert_conjugate(&z).samples.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn hilbert_is_linear_on_tone_mixture() {
        let rate = 16000;
        let n = 16000;
        let (w1, w2) = (
            2.0 * std::f64::consts::PI * 440.0 / rate as f64,
            2.0 * std::f64::consts::PI * 880.0 / rate as f64,
        );
        let mix = Waveform::new(
            (0..n).map(|i| (w1 * i as f64).cos() + 0.5 * (w2 * i as f64).cos()).collect(),
            rate,
        );
        let h = hilbert_conjugate(&mix);
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        for i in 2000..n - 2000 {
            let want = (w1 * i as f64).sin() + 0.5 * (w2 * i as f64).sin();
            num += (h.samples[i] - want).powi(2);
            den += want.powi(2);
        }
        assert!((num / den).sqrt() < 1e-3);
    }

    #[test]
    fn tone_amplitude_reads_back_probe() {
        let w = Waveform::tone(1234.0, 0.37, 1.0, 16000, 0.9);
        assert!((tone_amplitude(&w, 1234.0) - 0.37).abs() < 1e-3);
    }

    #[test]
    fn band_power_localizes_tone() {
        let w = Waveform::tone(1000.0, 1.0, 1.0, 16000, 0.0);
        let inside = band_power(&w, 900.0, 1100.0);
        let outside = band_power(&w, 2000.0, 7000.0);
        assert!((inside - 0.5).abs() < 1e-6, "sine mean square {inside}");
        assert!(outside < 1e-12);
    }

    #[test]
    fn welch_psd_total_power_and_peak_location() {
        let w = Waveform::tone(1000.0, 1.0, 1.0, 16000, 0.3);
        let psd = welch_psd(&w, 1024).unwrap();
        let total: f64 = psd.iter().sum();
        assert!((total - 0.5).abs() < 0.02, "tone mean square {total}");
        let peak = psd.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        let peak_hz = peak as f64 * 16000.0 / 1024.0;
        assert!((peak_hz - 1000.0).abs() < 16.0, "peak at {peak_hz} Hz");
        // spectral mass far from the tone is leakage only
        let far: f64 = psd[256..].iter().sum();
        assert!(far / total < 1e-6);
    }

    #[test]
    fn welch_psd_rejects_short_input() {
        let w = Waveform::zeros(512, 16000);
        assert!(welch_psd(&w, 1024).is_err());
    }
}
