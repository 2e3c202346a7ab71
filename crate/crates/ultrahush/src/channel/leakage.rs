//! What a bystander hears: audible-band energy radiated by the emitter
//! itself, i.e. after the speaker nonlinearity but before any microphone.

use super::{ChannelScene, ModulatedSignal};
use crate::signal::{band_power, Waveform};

/// Mean-square power in 20 Hz–16 kHz of the over-the-air signal
/// s + γ2·s². With a linear speaker (γ2 = 0) this is the numerical floor of
/// the modulation itself.
pub fn audible_leakage(sig: &ModulatedSignal, scene: &ChannelScene) -> f64 {
    let y: Vec<f64> = sig
        .wave
        .samples
        .iter()
        .map(|&s| s + scene.gamma2 * s * s)
        .collect();
    let w = Waveform::new(y, sig.wave.sample_rate);
    band_power(&w, 20.0, 16_000.0)
}

/// Rescale `sig` so its total mean-square power equals the reference's —
/// the fair-comparison normalizer for leakage experiments.
pub fn matched_power(sig: &ModulatedSignal, reference: &ModulatedSignal) -> ModulatedSignal {
    let ms = |w: &Waveform| -> f64 {
        if w.is_empty() {
            0.0
        } else {
            w.samples.iter().map(|v| v * v).sum::<f64>() / w.len() as f64
        }
    };
    let cur = ms(&sig.wave);
    let target = ms(&reference.wave);
    if cur == 0.0 || target == 0.0 {
        return sig.clone();
    }
    sig.scaled((target / cur).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{modulate_dsb, modulate_ssb};

    fn multitone() -> Waveform {
        let rate = 16000;
        Waveform::new(
            (0..16000)
                .map(|i| {
                    let t = i as f64 / rate as f64;
                    let tau = 2.0 * std::f64::consts::PI;
                    0.3 * (tau * 600.0 * t).cos()
                        + 0.3 * (tau * 1450.0 * t).cos()
                        + 0.3 * (tau * 2800.0 * t).cos()
                })
                .collect(),
            rate,
        )
    }

    #[test]
    fn linear_speaker_leaks_nothing() {
        let scene = ChannelScene::default(); // gamma2 = 0
        let sig = modulate_dsb(&multitone(), &scene).unwrap();
        let leak = audible_leakage(&sig, &scene);
        let carrier = band_power(&sig.wave, 17_000.0, 33_000.0);
        assert!(
            leak <= 1e-6 * carrier,
            "leakage {leak:.3e} not ≤ −60 dB of carrier band {carrier:.3e}"
        );
    }

    #[test]
    fn usb_leaks_no_more_than_dsb_at_matched_power() {
        let mut scene = ChannelScene::default();
        scene.gamma2 = 0.1;
        let m = multitone();
        let dsb = modulate_dsb(&m, &scene).unwrap();
        let usb = matched_power(&modulate_ssb(&m, &scene, true).unwrap(), &dsb);
        let leak_dsb = audible_leakage(&dsb, &scene);
        let leak_usb = audible_leakage(&usb, &scene);
        assert!(
            leak_usb <= leak_dsb,
            "USB leakage {leak_usb:.3e} exceeds DSB {leak_dsb:.3e}"
        );
    }

    #[test]
    fn leakage_monotone_in_speaker_nonlinearity() {
        let m = multitone();
        let base = ChannelScene::default();
        let sig = modulate_dsb(&m, &base).unwrap();
        let mut last = -1.0;
        for g2 in [0.0, 0.05, 0.1, 0.2] {
            let mut scene = base.clone();
            scene.gamma2 = g2;
            let leak = audible_leakage(&sig, &scene);
            assert!(
                leak >= last,
                "leakage not monotone: {leak:.3e} after {last:.3e} at γ2={g2}"
            );
            last = leak;
        }
    }

    #[test]
    fn matched_power_equalizes_mean_square() {
        let scene = ChannelScene::default();
        let m = multitone();
        let a = modulate_dsb(&m, &scene).unwrap();
        let b = modulate_ssb(&m, &scene, true).unwrap().scaled(0.3);
        let b_matched = matched_power(&b, &a);
        let ms = |w: &Waveform| w.samples.iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
        assert!((ms(&b_matched.wave) - ms(&a.wave)).abs() / ms(&a.wave) < 1e-12);
    }
}
