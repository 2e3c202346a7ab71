//! The receive side of the oracle: speaker nonlinearity, propagation,
//! additive position noise, microphone nonlinearity (the demodulator), and
//! the ADC front-end (DC block, anti-alias, decimation).

use super::{anomalous_noise, modulate_dsb, ChannelScene, ModulatedSignal};
use crate::error::{Error, Result};
use crate::signal::{apply_filter, design_fir, FilterKind, FilterSpec, Waveform};

/// Anti-alias tap count. Chosen so the linear-phase group delay
/// ((taps−1)/2 = 252 input samples) is a whole number of output samples at
/// the 6:1 decimation — the recorder has 2.6 ms of latency, like any real
/// ADC front end, and that latency stays on the output grid.
const AA_TAPS: usize = 505;

/// Causal FIR evaluated only at every `stride`-th sample (the ADC never
/// sees the skipped ones).
fn fir_decimate(h: &[f64], x: &[f64], stride: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len() / stride + 1);
    let mut i = 0usize;
    while i < x.len() {
        let j_hi = h.len().min(i + 1);
        let mut acc = 0.0;
        for j in 0..j_hi {
            acc += h[j] * x[i - j];
        }
        out.push(acc);
        i += stride;
    }
    out
}

/// Play a modulated signal through the scene and return what the recorder
/// captures at `adc_rate`, clipped to [-1, 1].
///
/// Order: speaker y = s + γ2·s²; propagation gain (attenuation at the
/// carrier frequency × angle gain); additive anomalous noise; microphone
/// k1·y + k2·y² + k3·y³; 20 Hz DC-block and anti-alias low-pass at
/// 0.9·adc_rate/2; decimation.
pub fn transmit(sig: &ModulatedSignal, scene: &ChannelScene) -> Result<Waveform> {
    scene.validate()?;
    if sig.wave.sample_rate != scene.ultra_rate {
        return Err(Error::Shape(format!(
            "modulated signal at {} Hz but scene ultra_rate is {}",
            sig.wave.sample_rate, scene.ultra_rate
        )));
    }
    if scene.ultra_rate % scene.adc_rate != 0 {
        return Err(Error::InvalidArg(format!(
            "ultra_rate {} must be an integer multiple of adc_rate {}",
            scene.ultra_rate, scene.adc_rate
        )));
    }
    let stride = (scene.ultra_rate / scene.adc_rate) as usize;
    let g = scene.propagation_gain();

    let mut y: Vec<f64> = sig
        .wave
        .samples
        .iter()
        .map(|&s| g * (s + scene.gamma2 * s * s))
        .collect();

    if scene.noise_rms > 0.0 {
        let noise = anomalous_noise(scene, y.len());
        for (v, n) in y.iter_mut().zip(&noise.samples) {
            *v += n;
        }
    }

    for v in y.iter_mut() {
        let x = *v;
        *v = scene.k1 * x + scene.k2 * x * x + scene.k3 * x * x * x;
    }

    let dc_blocked = apply_filter(
        &Waveform::new(y, scene.ultra_rate),
        &FilterSpec::high_pass(20.0).causal().order(2),
    )?;
    let cutoff = 0.45 * scene.adc_rate as f64;
    let aa = design_fir(FilterKind::LowPass(cutoff), AA_TAPS, scene.ultra_rate)?;
    let out: Vec<f64> = fir_decimate(&aa, &dc_blocked.samples, stride)
        .into_iter()
        .map(|v| v.clamp(-1.0, 1.0))
        .collect();
    Ok(Waveform::new(out, scene.adc_rate))
}

/// What the recorder hears when only the carrier plays: the anomalous-noise
/// path for this (θ, d) in isolation. Deterministic per scene.
pub fn carrier_noise(scene: &ChannelScene, duration_s: f64) -> Result<Waveform> {
    if duration_s <= 0.0 {
        return Err(Error::InvalidArg("duration must be positive".into()));
    }
    let n = (duration_s * scene.adc_rate as f64).round() as usize;
    let silence = Waveform::zeros(n, scene.adc_rate);
    let sig = modulate_dsb(&silence, scene)?;
    transmit(&sig, scene)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{modulate_ssb, MOD_DEPTH};
    use crate::signal::tone_amplitude;

    fn quiet_scene() -> ChannelScene {
        let mut s = ChannelScene::default();
        s.noise_rms = 0.0;
        s
    }

    fn cos_tone(freq: f64, amp: f64) -> Waveform {
        Waveform::tone(freq, amp, 1.0, 16000, std::f64::consts::FRAC_PI_2)
    }

    #[test]
    fn dsb_demodulates_with_quarter_second_harmonic() {
        let scene = quiet_scene();
        let sig = modulate_dsb(&cos_tone(1000.0, 1.0), &scene).unwrap();
        let rec = transmit(&sig, &scene).unwrap();
        assert_eq!(rec.sample_rate, 16000);

        // envelope k2·G²·A²·(1+m)²/2 → fundamental k2·G²·A²·a, harmonic a²/4
        let g2 = scene.propagation_gain().powi(2);
        let expect_fund = scene.k2 * g2 * MOD_DEPTH * MOD_DEPTH;
        let fund = tone_amplitude(&rec, 1000.0);
        let second = tone_amplitude(&rec, 2000.0);
        let carrier_leak = tone_amplitude(&rec, 7000.0); // 25 kHz folds to 7 kHz
        assert!(
            (fund - expect_fund).abs() / expect_fund < 0.03,
            "fundamental {fund} vs expected {expect_fund}"
        );
        assert!(
            (second / fund - 0.25).abs() < 0.02,
            "harmonic ratio {} not ≈ 1/4",
            second / fund
        );
        assert!(carrier_leak < 1e-3 * fund, "carrier alias leak {carrier_leak}");
    }

    #[test]
    fn usb_demodulates_without_second_harmonic() {
        let scene = quiet_scene();
        let sig = modulate_ssb(&cos_tone(1000.0, 1.0), &scene, true).unwrap();
        let rec = transmit(&sig, &scene).unwrap();
        let fund = tone_amplitude(&rec, 1000.0);
        let second = tone_amplitude(&rec, 2000.0);
        assert!(fund > 1e-3, "fundamental missing: {fund}");
        let down_db = 20.0 * (second.max(1e-30) / fund).log10();
        assert!(down_db <= -30.0, "second harmonic only {down_db:.1} dB down");
    }

    #[test]
    fn linear_microphone_hears_nothing() {
        let mut scene = quiet_scene();
        scene.k2 = 0.0;
        scene.k3 = 0.0;
        let sig = modulate_dsb(&cos_tone(1000.0, 1.0), &scene).unwrap();
        let rec = transmit(&sig, &scene).unwrap();
        assert!(rec.rms() < 1e-4, "linear mic leaked RMS {}", rec.rms());
    }

    #[test]
    fn recovered_amplitude_scales_as_gain_squared() {
        let scene = quiet_scene();
        let sig = modulate_dsb(&cos_tone(1000.0, 1.0), &scene).unwrap();
        let full = tone_amplitude(&transmit(&sig, &scene).unwrap(), 1000.0);
        let half = tone_amplitude(&transmit(&sig.scaled(0.5), &scene).unwrap(), 1000.0);
        let ratio = half / full;
        assert!(
            (ratio - 0.25).abs() < 0.025,
            "half-amplitude carrier gave ratio {ratio}, want ≈ 1/4"
        );
    }

    #[test]
    fn carrier_noise_is_deterministic_and_position_dependent() {
        let scene = ChannelScene::default();
        let a = carrier_noise(&scene, 1.0).unwrap();
        let b = carrier_noise(&scene, 1.0).unwrap();
        assert_eq!(a.samples, b.samples);
        assert!(a.rms() > 1e-4, "noise path silent");

        let tilted = scene.at(scene.distance_m, scene.angle_deg + 15.0);
        let c = carrier_noise(&tilted, 1.0).unwrap();
        let n = a.len().min(c.len());
        let (x, y) = (&a.samples[..n], &c.samples[..n]);
        let mx = x.iter().sum::<f64>() / n as f64;
        let my = y.iter().sum::<f64>() / n as f64;
        let cov: f64 = x.iter().zip(y).map(|(p, q)| (p - mx) * (q - my)).sum();
        let vx: f64 = x.iter().map(|p| (p - mx) * (p - mx)).sum();
        let vy: f64 = y.iter().map(|q| (q - my) * (q - my)).sum();
        let r = cov / (vx * vy).sqrt().max(1e-30);
        assert!(r.abs() < 0.9, "θ+15° correlation {r}");
    }

    #[test]
    fn carrier_noise_decays_with_distance() {
        let near = ChannelScene::default();
        let far = near.at(5.0, near.angle_deg);
        let a = carrier_noise(&near, 1.0).unwrap();
        let b = carrier_noise(&far, 1.0).unwrap();
        assert!(
            b.rms() < 0.8 * a.rms(),
            "noise RMS {} at 5 m vs {} at 1 m",
            b.rms(),
            a.rms()
        );
    }

    #[test]
    fn transmit_is_deterministic() {
        let scene = ChannelScene::default();
        let sig = modulate_dsb(&cos_tone(440.0, 0.8), &scene).unwrap();
        let a = transmit(&sig, &scene).unwrap();
        let b = transmit(&sig, &scene).unwrap();
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn output_always_within_full_scale() {
        let mut scene = ChannelScene::default();
        scene.k1 = 3.0;
        scene.k2 = 2.0;
        let sig = modulate_dsb(&cos_tone(500.0, 1.0), &scene).unwrap();
        let rec = transmit(&sig, &scene).unwrap();
        assert!(rec.peak() <= 1.0);
    }
}
