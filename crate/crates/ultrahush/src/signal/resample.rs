//! Band-limited arbitrary-ratio resampler: Blackman-windowed sinc
//! interpolation with the kernel stretched on downsampling so the anti-alias
//! cutoff tracks the lower of the two Nyquist limits.

use super::Waveform;
use crate::error::{Error, Result};

const TAPS_PER_SIDE: f64 = 32.0;

struct Kernel {
    cutoff: f64,  // normalized to input rate, cycles/sample
    half_width: f64, // in input samples
}

fn kernel_for(source: u32, target: u32) -> Kernel {
    let ratio = source as f64 / target as f64; // >1 when downsampling
    let stretch = ratio.max(1.0);
    Kernel {
        cutoff: 0.45 / stretch,
        half_width: TAPS_PER_SIDE * stretch,
    }
}

fn blackman(x: f64) -> f64 {
    // x in [-1, 1]
    let a = std::f64::consts::PI * (x + 1.0);
    0.42 - 0.5 * a.cos() + 0.08 * (2.0 * a).cos()
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

pub(crate) fn out_len(in_len: usize, source: u32, target: u32) -> usize {
    ((in_len as u128 * target as u128 + (source as u128) / 2) / source as u128) as usize
}

/// Visit every (input index, weight) tap for output sample `j`.
fn for_each_tap(
    j: usize,
    in_len: usize,
    source: u32,
    target: u32,
    k: &Kernel,
    mut f: impl FnMut(usize, f64),
) {
    let center = j as f64 * source as f64 / target as f64;
    let lo = ((center - k.half_width).ceil() as i64).max(0);
    let hi = ((center + k.half_width).floor() as i64).min(in_len as i64 - 1);
    for i in lo..=hi {
        let d = center - i as f64;
        let w = 2.0 * k.cutoff * sinc(2.0 * k.cutoff * d) * blackman(d / k.half_width);
        f(i as usize, w);
    }
}

/// Resample to `target_rate`. Identity when the rates match; length scales by
/// target/source within rounding.
pub fn resample(w: &Waveform, target_rate: u32) -> Result<Waveform> {
    if target_rate == 0 {
        return Err(Error::InvalidArg("resample: non-positive rate".into()));
    }
    if target_rate == w.sample_rate {
        return Ok(w.clone());
    }
    let source = w.sample_rate;
    let n_out = out_len(w.len(), source, target_rate);
    let k = kernel_for(source, target_rate);
    let mut out = vec![0.0; n_out];
    for (j, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for_each_tap(j, w.len(), source, target_rate, &k, |i, wt| {
            acc += w.samples[i] * wt;
        });
        *o = acc;
    }
    Ok(Waveform::new(out, target_rate))
}

/// Exact adjoint of `resample` as a linear map: given the gradient w.r.t. the
/// output, scatter it back through the same taps. `in_len`/`in_rate` describe
/// the forward input.
pub fn resample_adjoint(grad_out: &[f64], in_len: usize, in_rate: u32, out_rate: u32) -> Vec<f64> {
    if out_rate == in_rate {
        return grad_out.to_vec();
    }
    let k = kernel_for(in_rate, out_rate);
    let mut grad_in = vec![0.0; in_len];
    for (j, &g) in grad_out.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        for_each_tap(j, in_len, in_rate, out_rate, &k, |i, wt| {
            grad_in[i] += g * wt;
        });
    }
    grad_in
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::tone_amplitude;

    #[test]
    fn identity_when_rates_match() {
        let w = Waveform::tone(1000.0, 0.5, 0.1, 16000, 0.0);
        let r = resample(&w, 16000).unwrap();
        assert_eq!(r, w);
    }

    #[test]
    fn tone_below_both_nyquists_survives() {
        let w = Waveform::tone(1000.0, 0.8, 1.0, 16000, 0.0);
        let r = resample(&w, 6400).unwrap();
        assert_eq!(r.sample_rate, 6400);
        assert!((r.len() as i64 - 6400).abs() <= 1);
        let amp = tone_amplitude(&r, 1000.0);
        assert!((amp - 0.8).abs() < 0.01, "1 kHz came back at {amp}");
    }

    #[test]
    fn tone_beyond_target_nyquist_attenuated_40db() {
        let w = Waveform::tone(5000.0, 1.0, 1.0, 16000, 0.0);
        let r = resample(&w, 6400).unwrap();
        // 5 kHz aliases to 1.4 kHz at 6.4 kHz rate; all leftover energy must be tiny
        let rms = r.rms();
        let in_rms = w.rms();
        let drop_db = 20.0 * (in_rms / rms.max(1e-30)).log10();
        assert!(drop_db >= 40.0, "only {drop_db:.1} dB attenuation");
    }

    #[test]
    fn round_trip_preserves_band_limited_content() {
        let w = Waveform::tone(900.0, 0.6, 0.5, 16000, 0.2);
        let down = resample(&w, 8000).unwrap();
        let up = resample(&down, 16000).unwrap();
        let n = up.len().min(w.len());
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 600..n - 600 {
            num += (up.samples[i] - w.samples[i]).powi(2);
            den += w.samples[i].powi(2);
        }
        assert!((num / den).sqrt() < 1e-2);
    }

    #[test]
    fn integer_upsample_length_exact() {
        let w = Waveform::zeros(16000, 16000);
        let r = resample(&w, 96000).unwrap();
        assert_eq!(r.len(), 96000);
    }

    #[test]
    fn adjoint_matches_transpose_inner_product() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..400).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let xin = Waveform::new(x.clone(), 16000);
        let y = resample(&xin, 11025).unwrap();
        let g: Vec<f64> = (0..y.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let gx = resample_adjoint(&g, x.len(), 16000, 11025);
        // <R x, g> == <x, Rᵀ g>
        let lhs: f64 = y.samples.iter().zip(&g).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&gx).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0));
    }
}
