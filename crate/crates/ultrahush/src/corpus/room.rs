//! Synthetic room impulse responses and ambient-noise presets.

use crate::error::{Error, Result};
use crate::signal::{apply_filter, FilterSpec, Waveform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const RIR_RATE: u32 = 16000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RoomClass {
    Small,
    Medium,
    Large,
    Corridor,
}

impl RoomClass {
    pub const ALL: [RoomClass; 4] =
        [RoomClass::Small, RoomClass::Medium, RoomClass::Large, RoomClass::Corridor];

    pub fn rt60_s(self) -> f64 {
        match self {
            RoomClass::Small => 0.15,
            RoomClass::Medium => 0.3,
            RoomClass::Large => 0.5,
            RoomClass::Corridor => 0.8,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            RoomClass::Small => "small",
            RoomClass::Medium => "medium",
            RoomClass::Large => "large",
            RoomClass::Corridor => "corridor",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.label() == s)
            .ok_or_else(|| Error::InvalidArg(format!("unknown room class {s:?}")))
    }
}

/// Direct-path spike at t=0 followed by an exponentially decaying Gaussian
/// tail whose envelope loses 60 dB over the class RT60. Energy-normalized;
/// the first sample is always the largest tap.
pub fn synth_rir(class: RoomClass, seed: u64) -> Waveform {
    let rt60 = class.rt60_s();
    let rate = RIR_RATE as f64;
    let len = (1.25 * rt60 * rate).round() as usize;
    let decay = (1000.0f64).ln() / rt60; // 60 dB amplitude loss over rt60
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = Normal::new(0.0, 1.0).unwrap();

    let mut h = vec![0.0; len];
    h[0] = 1.0;
    let mut tail_peak = 0.0f64;
    for (i, v) in h.iter_mut().enumerate().skip(1) {
        let t = i as f64 / rate;
        *v = 0.35 * gauss.sample(&mut rng) * (-decay * t).exp();
        tail_peak = tail_peak.max(v.abs());
    }
    // a freak Gaussian draw must not outgrow the direct path
    if tail_peak >= 0.97 {
        let fix = 0.9 / tail_peak;
        for v in &mut h[1..] {
            *v *= fix;
        }
    }
    let energy: f64 = h.iter().map(|v| v * v).sum();
    let norm = energy.sqrt();
    for v in &mut h {
        *v /= norm;
    }
    Waveform::new(h, RIR_RATE)
}

#[derive(Debug, Clone)]
pub struct RIRBank {
    pub rirs: Vec<(RoomClass, Waveform)>,
}

pub fn build_rir_bank(per_class: usize, seed: u64) -> Result<RIRBank> {
    if per_class == 0 {
        return Err(Error::InvalidArg("need at least one impulse response per room class".into()));
    }
    let mut rirs = Vec::with_capacity(4 * per_class);
    for (ci, class) in RoomClass::ALL.into_iter().enumerate() {
        for j in 0..per_class {
            rirs.push((class, synth_rir(class, seed ^ ((ci as u64) << 32 | j as u64))));
        }
    }
    Ok(RIRBank { rirs })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmbientKind {
    /// Speech-band noise with a slow syllabic amplitude ripple.
    Babble,
    /// Sparse high-frequency keystroke bursts.
    Typing,
    /// Mains hum: 50 Hz and harmonics up to 500 Hz.
    Hum,
    /// Low-frequency rumble with slow gusts.
    Wind,
}

impl AmbientKind {
    pub const ALL: [AmbientKind; 4] =
        [AmbientKind::Babble, AmbientKind::Typing, AmbientKind::Hum, AmbientKind::Wind];

    pub fn label(self) -> &'static str {
        match self {
            AmbientKind::Babble => "babble",
            AmbientKind::Typing => "typing",
            AmbientKind::Hum => "hum",
            AmbientKind::Wind => "wind",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.label() == s)
            .ok_or_else(|| Error::InvalidArg(format!("unknown ambient preset {s:?}")))
    }
}

/// Synthesized stand-ins for recorded ambience, normalized to RMS 0.1.
pub fn ambient_noise(kind: AmbientKind, duration_s: f64, seed: u64) -> Result<Waveform> {
    if duration_s <= 0.0 {
        return Err(Error::InvalidArg("ambient clip duration must be positive".into()));
    }
    let rate = RIR_RATE as f64;
    let n = (duration_s * rate).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = Normal::new(0.0, 1.0).unwrap();

    let mut w = match kind {
        AmbientKind::Babble => {
            let white: Vec<f64> = (0..n).map(|_| gauss.sample(&mut rng)).collect();
            let mut w = apply_filter(
                &Waveform::new(white, RIR_RATE),
                &FilterSpec::band_pass(300.0, 3000.0).order(4),
            )?;
            let f_mod = rng.gen_range(3.0..6.0);
            let ph = rng.gen_range(0.0..std::f64::consts::TAU);
            for (i, v) in w.samples.iter_mut().enumerate() {
                let t = i as f64 / rate;
                *v *= 0.55 + 0.45 * (std::f64::consts::TAU * f_mod * t + ph).sin();
            }
            w
        }
        AmbientKind::Typing => {
            let mut s = vec![0.0; n];
            let mut t = 0.0f64;
            loop {
                t += -rng.gen_range(0.02f64..1.0).ln() / 8.0; // ~8 strikes per second
                let at = (t * rate) as usize;
                if at >= n {
                    break;
                }
                let strength = rng.gen_range(0.5..1.5);
                for k in 0..((0.004 * rate) as usize).min(n - at) {
                    s[at + k] += strength * gauss.sample(&mut rng) * (-(k as f64) / (0.0012 * rate)).exp();
                }
            }
            apply_filter(&Waveform::new(s, RIR_RATE), &FilterSpec::band_pass(1500.0, 6000.0).order(4))?
        }
        AmbientKind::Hum => {
            let mut s = vec![0.0; n];
            for k in 1..=10 {
                let ph = rng.gen_range(0.0..std::f64::consts::TAU);
                let f = 50.0 * k as f64;
                let amp = 1.0 / k as f64;
                for (i, v) in s.iter_mut().enumerate() {
                    *v += amp * (std::f64::consts::TAU * f * i as f64 / rate + ph).sin();
                }
            }
            for v in s.iter_mut() {
                *v += 0.05 * gauss.sample(&mut rng);
            }
            apply_filter(&Waveform::new(s, RIR_RATE), &FilterSpec::low_pass(550.0).order(4))?
        }
        AmbientKind::Wind => {
            let white: Vec<f64> = (0..n).map(|_| gauss.sample(&mut rng)).collect();
            let mut w =
                apply_filter(&Waveform::new(white, RIR_RATE), &FilterSpec::low_pass(150.0).order(6))?;
            let ph = rng.gen_range(0.0..std::f64::consts::TAU);
            for (i, v) in w.samples.iter_mut().enumerate() {
                let t = i as f64 / rate;
                *v *= 0.55 + 0.45 * (std::f64::consts::TAU * 0.25 * t + ph).sin();
            }
            w
        }
    };

    let rms = w.rms();
    if rms > 0.0 {
        let g = 0.1 / rms;
        for v in &mut w.samples {
            *v *= g;
        }
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{band_power, tone_amplitude};

    /// Least-squares RT60 from the tail's windowed log-energy slope.
    fn fitted_rt60(h: &Waveform) -> f64 {
        let rate = h.sample_rate as f64;
        let win = (0.010 * rate) as usize;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut start = (0.005 * rate) as usize;
        while start + win <= h.len() {
            let e: f64 = h.samples[start..start + win].iter().map(|v| v * v).sum();
            if e > 0.0 {
                xs.push((start + win / 2) as f64 / rate);
                ys.push(e.ln());
            }
            start += win;
        }
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        let slope = sxy / sxx; // d ln(energy) / dt
        -6.0 * (10.0f64).ln() / slope
    }

    #[test]
    fn rir_shape_and_decay_rate() {
        for class in RoomClass::ALL {
            let h = synth_rir(class, 42);
            let peak = h.samples.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
            assert_eq!(peak, h.samples[0].abs(), "{}: direct path must be the max tap", class.label());
            let energy: f64 = h.samples.iter().map(|v| v * v).sum();
            assert!((energy - 1.0).abs() < 1e-9, "{}: energy {energy}", class.label());
            let fit = fitted_rt60(&h);
            let rel = (fit - class.rt60_s()).abs() / class.rt60_s();
            assert!(rel <= 0.10, "{}: fitted RT60 {fit:.3} vs {:.3}", class.label(), class.rt60_s());
        }
    }

    #[test]
    fn same_class_different_seeds_share_the_decay_only() {
        let a = synth_rir(RoomClass::Medium, 1);
        let b = synth_rir(RoomClass::Medium, 2);
        assert_ne!(a.samples[1..], b.samples[1..], "tails must differ across seeds");
        for h in [&a, &b] {
            let rel = (fitted_rt60(h) - 0.3).abs() / 0.3;
            assert!(rel <= 0.10);
        }
        let a2 = synth_rir(RoomClass::Medium, 1);
        assert_eq!(a.samples, a2.samples);
    }

    #[test]
    fn bank_covers_all_classes() {
        let bank = build_rir_bank(3, 9).unwrap();
        assert_eq!(bank.rirs.len(), 12);
        for class in RoomClass::ALL {
            assert_eq!(bank.rirs.iter().filter(|(c, _)| *c == class).count(), 3);
        }
        assert!(build_rir_bank(0, 9).is_err());
    }

    #[test]
    fn ambient_presets_have_their_signatures() {
        let dur = 3.0;
        for kind in AmbientKind::ALL {
            let w = ambient_noise(kind, dur, 17).unwrap();
            assert_eq!(w.len(), 48000);
            assert!((w.rms() - 0.1).abs() < 1e-9, "{}: rms {}", kind.label(), w.rms());
        }

        let babble = ambient_noise(AmbientKind::Babble, dur, 17).unwrap();
        let in_band = band_power(&babble, 300.0, 3000.0) / band_power(&babble, 1.0, 7999.0);
        assert!(in_band > 0.8, "babble band share {in_band:.2}");

        let hum = ambient_noise(AmbientKind::Hum, dur, 17).unwrap();
        assert!(tone_amplitude(&hum, 50.0) > 20.0 * tone_amplitude(&hum, 1000.0));

        let typing = ambient_noise(AmbientKind::Typing, dur, 17).unwrap();
        let peak = typing.samples.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        assert!(peak / typing.rms() > 4.0, "typing crest factor {}", peak / typing.rms());

        let wind = ambient_noise(AmbientKind::Wind, dur, 17).unwrap();
        let lf = band_power(&wind, 1.0, 300.0) / band_power(&wind, 1.0, 7999.0);
        assert!(lf > 0.8, "wind LF share {lf:.2}");
    }

    #[test]
    fn labels_round_trip() {
        for c in RoomClass::ALL {
            assert_eq!(RoomClass::parse(c.label()).unwrap(), c);
        }
        for k in AmbientKind::ALL {
            assert_eq!(AmbientKind::parse(k.label()).unwrap(), k);
        }
        assert!(RoomClass::parse("garage").is_err());
    }
}
