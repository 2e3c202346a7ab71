//! Deterministic dual-tone toy voices. Every alphabet character owns a
//! distinct two-tone signature (DTMF-style), so the recognizer has a clean,
//! license-free corpus it can learn to near-zero error.

use super::Phrase;
use crate::asr::token_index;
use crate::error::{Error, Result};
use crate::signal::Waveform;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SYNTH_RATE: u32 = 16000;
/// Raised-cosine attack/release on each character unit.
const UNIT_EDGE_S: f64 = 0.008;
const UNIT_PEAK: f64 = 0.45;
/// Trailing fraction of each character unit left silent so boundaries stay crisp.
const GAP_FRACTION: f64 = 0.125;
/// Per-unit random pitch wobble, multiplicative.
const DETUNE: f64 = 0.02;
const ALPHABET_SIZE: usize = 28;

/// A voice is a character→tone-pair table plus pacing parameters. Tone rows
/// step through 7 low × 4 high frequencies, scaled per voice, which keeps
/// all 28 pairs distinct and inside 300–3500 Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyVoice {
    pub base_pitch: f64,
    pub tone_scale: f64,
    pub speed_jitter: f64,
    pub char_duration_s: f64,
    /// Indexed by token index − 1 (a=0 … apostrophe=27).
    pub tones: Vec<(f64, f64)>,
}

impl ToyVoice {
    pub fn new(base_pitch: f64, tone_scale: f64, speed_jitter: f64) -> Result<Self> {
        if !(60.0..400.0).contains(&base_pitch) {
            return Err(Error::InvalidArg(format!("base pitch {base_pitch} Hz out of range")));
        }
        if !(0.0..0.3).contains(&speed_jitter) {
            return Err(Error::InvalidArg(format!("speed jitter {speed_jitter} out of range")));
        }
        let tones: Vec<(f64, f64)> = (0..ALPHABET_SIZE)
            .map(|i| {
                let f1 = (340.0 + 115.0 * (i % 7) as f64) * tone_scale;
                let f2 = (1250.0 + 280.0 * (i / 7) as f64) * tone_scale;
                (f1, f2)
            })
            .collect();
        for &(f1, f2) in &tones {
            for f in [f1, f2] {
                if !(300.0..=3500.0).contains(&f) {
                    return Err(Error::InvalidArg(format!(
                        "tone scale {tone_scale} pushes a character tone to {f:.0} Hz"
                    )));
                }
            }
        }
        Ok(ToyVoice { base_pitch, tone_scale, speed_jitter, char_duration_s: 0.12, tones })
    }

    /// The k-th stock voice; pitch and tone scale spread out with k.
    pub fn standard(k: usize) -> Result<Self> {
        Self::new(115.0 + 16.0 * k as f64, 0.92 + 0.0255 * k as f64, 0.06)
    }

    pub fn standard_set(n: usize) -> Result<Vec<Self>> {
        (0..n).map(Self::standard).collect()
    }

    pub fn tone_pair(&self, c: char) -> Option<(f64, f64)> {
        token_index(c).map(|i| self.tones[i - 1])
    }
}

/// Render a phrase as concatenated dual-tone character units at 16 kHz.
/// Each unit draws, in order, a duration jitter, a pitch detune, and three
/// phases from the seeded stream, so equal arguments reproduce the waveform
/// bit for bit.
pub fn synth_utterance(p: &Phrase, v: &ToyVoice, seed: u64) -> Result<(Waveform, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rate = SYNTH_RATE as f64;
    let mut samples = Vec::with_capacity((p.text.chars().count() as f64 * v.char_duration_s * rate) as usize + 16);
    for c in p.text.chars() {
        let (f1, f2) = v
            .tone_pair(c)
            .ok_or_else(|| Error::InvalidArg(format!("character {c:?} is not in the alphabet")))?;
        let jit: f64 = if v.speed_jitter > 0.0 {
            rng.gen_range(-v.speed_jitter..v.speed_jitter)
        } else {
            0.0
        };
        let detune: f64 = 1.0 + rng.gen_range(-DETUNE..DETUNE);
        let ph1: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let ph2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let ph0: f64 = rng.gen_range(0.0..std::f64::consts::TAU);

        let dur = v.char_duration_s * (1.0 + jit);
        let n = (dur * rate).round().max(1.0) as usize;
        // tones fill the head of the unit; the tail is a short silence that
        // marks the character boundary
        let tone_n = ((n as f64 * (1.0 - GAP_FRACTION)).round() as usize).max(1);
        let edge = (UNIT_EDGE_S * rate).min(tone_n as f64 / 4.0);
        let (w1, w2, w0) = (
            std::f64::consts::TAU * f1 * detune / rate,
            std::f64::consts::TAU * f2 * detune / rate,
            std::f64::consts::TAU * v.base_pitch * detune / rate,
        );
        for i in 0..tone_n {
            let t = i as f64;
            let env_in = if t < edge { 0.5 - 0.5 * (std::f64::consts::PI * t / edge).cos() } else { 1.0 };
            let tail = (tone_n - 1 - i) as f64;
            let env_out =
                if tail < edge { 0.5 - 0.5 * (std::f64::consts::PI * tail / edge).cos() } else { 1.0 };
            let s = 0.50 * (w1 * t + ph1).sin() + 0.35 * (w2 * t + ph2).sin() + 0.15 * (w0 * t + ph0).sin();
            samples.push(UNIT_PEAK * env_in * env_out * s);
        }
        samples.resize(samples.len() + (n - tone_n), 0.0);
    }
    Ok((Waveform::new(samples, SYNTH_RATE), p.text.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::band_power;

    fn phrase(text: &str) -> Phrase {
        Phrase::new("x", text).unwrap()
    }

    #[test]
    fn tone_pairs_are_distinct_and_bounded() {
        for k in [0usize, 4, 9] {
            let v = ToyVoice::standard(k).unwrap();
            assert_eq!(v.tones.len(), 28);
            for (i, &(a, b)) in v.tones.iter().enumerate() {
                assert!((300.0..=3500.0).contains(&a) && (300.0..=3500.0).contains(&b));
                assert!(a * (1.0 + DETUNE) < 4000.0 && b * (1.0 + DETUNE) < 4000.0);
                for &(c, d) in &v.tones[i + 1..] {
                    assert!((a, b) != (c, d), "voice {k} repeats a tone pair");
                }
            }
        }
        assert!(ToyVoice::new(150.0, 2.0, 0.05).is_err(), "tones past 3.5 kHz must be rejected");
        assert!(ToyVoice::new(150.0, 0.5, 0.05).is_err(), "tones under 300 Hz must be rejected");
    }

    #[test]
    fn single_character_shows_its_tone_pair() {
        let v = ToyVoice::standard(2).unwrap();
        let (w, text) = synth_utterance(&phrase("a"), &v, 11).unwrap();
        assert_eq!(text, "a");
        let lo = 0.12 * (1.0 - v.speed_jitter);
        let hi = 0.12 * (1.0 + v.speed_jitter);
        let dur = w.len() as f64 / 16000.0;
        assert!((lo..=hi).contains(&dur), "unit lasted {dur} s");

        let (f1, f2) = v.tone_pair('a').unwrap();
        let in_pair = band_power(&w, f1 * 0.96, f1 * 1.04) + band_power(&w, f2 * 0.96, f2 * 1.04);
        let total = band_power(&w, 1.0, 7999.0);
        assert!(in_pair / total > 0.6, "tone pair holds {:.2} of the power", in_pair / total);
        // a different character's high tone should carry almost nothing
        let (_, g2) = v.tone_pair('z').unwrap();
        assert!(band_power(&w, g2 * 0.97, g2 * 1.03) / total < 0.02);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let v = ToyVoice::standard(1).unwrap();
        let p = phrase("turn on the light");
        let (a, _) = synth_utterance(&p, &v, 99).unwrap();
        let (b, _) = synth_utterance(&p, &v, 99).unwrap();
        assert_eq!(a.samples, b.samples);
        let (c, _) = synth_utterance(&p, &v, 100).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn duration_tracks_character_count() {
        let v = ToyVoice::standard(0).unwrap();
        let p = phrase("open the door");
        let (w, _) = synth_utterance(&p, &v, 5).unwrap();
        let n = 13.0 * 0.12 * 16000.0;
        let dur = w.len() as f64;
        assert!(dur > n * (1.0 - v.speed_jitter) && dur < n * (1.0 + v.speed_jitter));
    }

    #[test]
    fn peak_stays_in_budget() {
        let v = ToyVoice::standard(3).unwrap();
        let (w, _) = synth_utterance(&phrase("what time is it"), &v, 7).unwrap();
        let peak = w.samples.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        assert!(peak <= UNIT_PEAK + 1e-12, "peak {peak}");
        assert!(peak > 0.2, "unit amplitude collapsed to {peak}");
    }
}
