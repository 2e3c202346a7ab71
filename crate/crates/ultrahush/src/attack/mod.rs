//! Perturbation crafting and evaluation: silence perturbations that blank a
//! victim's speech, universal perturbations that rewrite it to a chosen
//! command, and the augmentation grid (time shifts, speech volume, room
//! reverberation) that makes both survive deployment conditions.

mod augment;
mod craft;
mod eval;

pub use augment::{random_shift, rir_augment, shift_by, volume_augment};
pub use craft::{craft_silence, craft_universal};
pub use eval::{evaluate_attack, EvalCell, EvalGrid, EvalReport, EvalUtterance, SceneSummary};

use crate::asr::encode;
use crate::chanest::{ChannelResponse, NoiseBank, TransformParams, TransformSet};
use crate::corpus::RIRBank;
use crate::defense::{AdaptiveDefense, DefenseSpec};
use crate::error::{Error, Result};
use crate::signal::{read_wav, write_wav, SampleFormat, Waveform};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbKind {
    /// Push every decoded frame to blank: the victim's speech vanishes.
    Silence,
    /// Rewrite the decoding to a fixed target command.
    Universal,
}

impl PerturbKind {
    pub fn label(self) -> &'static str {
        match self {
            PerturbKind::Silence => "silence",
            PerturbKind::Universal => "universal",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "silence" => Ok(PerturbKind::Silence),
            "universal" => Ok(PerturbKind::Universal),
            _ => Err(Error::InvalidArg(format!("unknown perturbation kind {s:?}"))),
        }
    }
}

/// Everything the optimizer needs to know, and the record of what a crafted
/// perturbation was optimized for.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSpec {
    pub kind: PerturbKind,
    /// Target transcript; empty for silence perturbations.
    pub target: String,
    /// Length of the rewrite segment δ.
    pub delta_len_s: f64,
    /// Length of the mute segment ξ.
    pub xi_len_s: f64,
    /// Amplitude budget; samples are clipped to [-ε, ε] after every step.
    pub epsilon: f64,
    pub max_epoch: usize,
    /// Early-stop loss threshold; `None` derives one from the utterance set
    /// (0.01 × mean frame count for silence, 0.05 × for universal).
    pub obj_value: Option<f64>,
    pub learning_rate: f64,
    /// Channel (response, noise) pairs sampled per epoch.
    pub pairs_per_iter: usize,
    /// Synchronization window: perturbations are trained and judged under
    /// random onset delays up to this many milliseconds.
    pub sync_t_ms: f64,
    /// Uniform speech-volume range applied to the victim utterances.
    pub beta_range: (f64, f64),
    pub seed: u64,
}

impl PerturbationSpec {
    pub fn silence(seed: u64) -> Self {
        PerturbationSpec {
            kind: PerturbKind::Silence,
            target: String::new(),
            delta_len_s: 1.2,
            xi_len_s: 5.0,
            epsilon: 1.0,
            max_epoch: 800,
            obj_value: None,
            learning_rate: 0.01,
            pairs_per_iter: 5,
            sync_t_ms: 100.0,
            beta_range: (0.5, 1.5),
            seed,
        }
    }

    pub fn universal(target: &str, seed: u64) -> Self {
        PerturbationSpec {
            kind: PerturbKind::Universal,
            target: target.to_string(),
            ..PerturbationSpec::silence(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::InvalidArg(format!("epsilon {} outside (0, 1]", self.epsilon)));
        }
        if !(self.delta_len_s > 0.0) || !(self.xi_len_s > 0.0) {
            return Err(Error::InvalidArg("perturbation lengths must be positive".into()));
        }
        if self.max_epoch == 0 || self.pairs_per_iter == 0 {
            return Err(Error::InvalidArg("max_epoch and pairs_per_iter must be ≥ 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArg(format!("learning rate {}", self.learning_rate)));
        }
        if !(self.sync_t_ms >= 0.0 && self.sync_t_ms.is_finite()) {
            return Err(Error::InvalidArg(format!("sync window {} ms", self.sync_t_ms)));
        }
        let (lo, hi) = self.beta_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::InvalidArg(format!("beta range [{lo}, {hi}] must be positive and ordered")));
        }
        match self.kind {
            PerturbKind::Silence if !self.target.is_empty() => {
                Err(Error::InvalidArg("silence perturbations target the empty transcript".into()))
            }
            PerturbKind::Universal if self.target.is_empty() => {
                Err(Error::InvalidArg("universal perturbations need a target transcript".into()))
            }
            PerturbKind::Universal => encode(&self.target).map(|_| ()),
            _ => Ok(()),
        }
    }
}

/// A crafted perturbation: the optimized waveform (δ or ξ), the spec it was
/// trained under, and its loss-per-epoch history.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub samples: Waveform,
    pub spec: PerturbationSpec,
    pub loss_log: Vec<f64>,
}

impl Perturbation {
    pub fn epochs_run(&self) -> usize {
        self.loss_log.len()
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.loss_log.last().copied()
    }
}

/// What the attacker plays for a long victim utterance: the rewrite segment
/// once, then the mute segment repeated until `total_s` is covered (the last
/// repetition is cut short). The rewrite segment is never truncated —
/// requesting less than its length is an error.
pub fn compose_alter_and_mute(delta: &Waveform, xi: &Waveform, total_s: f64) -> Result<Waveform> {
    if delta.sample_rate != xi.sample_rate {
        return Err(Error::Shape(format!(
            "segment rates differ: {} vs {} Hz",
            delta.sample_rate, xi.sample_rate
        )));
    }
    let total = (total_s * delta.sample_rate as f64).round() as usize;
    if total < delta.len() {
        return Err(Error::InvalidArg(format!(
            "requested {total} samples but the rewrite segment alone has {}; it is never truncated",
            delta.len()
        )));
    }
    let tail = total - delta.len();
    if tail > 0 && xi.is_empty() {
        return Err(Error::InvalidArg("mute segment is empty but padding was requested".into()));
    }
    let mut out = Vec::with_capacity(total);
    out.extend_from_slice(&delta.samples);
    out.extend(xi.samples.iter().cycle().take(tail));
    Ok(Waveform::new(out, delta.sample_rate))
}

/// The emitted cover for a mixing window of `len` samples. A silence
/// perturbation tiles itself; a universal one plays `p` (= δ) first and tiles
/// the frozen `xi` behind it. Unlike [`compose_alter_and_mute`] this may cut
/// the head segment: a window shorter than δ simply sees less of it.
pub(crate) fn attack_cover(p: &[f64], xi: Option<&[f64]>, len: usize) -> Result<Vec<f64>> {
    let (head, tail) = match xi {
        None => (p, p),
        Some(x) => (p, x),
    };
    if head.is_empty() || tail.is_empty() {
        return Err(Error::InvalidArg("perturbation segments must be non-empty".into()));
    }
    let mut out = Vec::with_capacity(len);
    out.extend(head.iter().take(len));
    while out.len() < len {
        let need = len - out.len();
        out.extend(tail.iter().take(need));
    }
    Ok(out)
}

/// Channel stand-in for ablations: a single FIR response (e.g. a plain
/// low-pass, or `[1.0]` for no transformation at all) with no recorded noise.
/// Crafting against it runs noise-free at the reference position.
pub fn surrogate_transform_set(taps: Vec<f64>, rate: u32) -> Result<TransformSet> {
    if taps.is_empty() {
        return Err(Error::InvalidArg("surrogate response needs at least one tap".into()));
    }
    TransformSet::new(
        vec![ChannelResponse { taps, angle_deg: 90.0, d_ref_m: 1.0, adc_rate: rate }],
        NoiseBank::default(),
        TransformParams::default(),
    )
}

/// The augmentation pool the optimizer draws from each epoch: measured
/// channel transforms, victim utterances, and room impulse responses, plus
/// the shift/volume ranges. An optional defense sits between mixing and the
/// recognizer so perturbations can be crafted against a defended receiver.
#[derive(Debug, Clone)]
pub struct AugmentConfig {
    pub transforms: TransformSet,
    pub utterances: Vec<Waveform>,
    pub rir_bank: RIRBank,
    pub sync_t_ms: f64,
    pub beta_range: (f64, f64),
    pub defense: Option<AdaptiveDefense>,
}

impl AugmentConfig {
    pub fn new(
        transforms: TransformSet,
        utterances: Vec<Waveform>,
        rir_bank: RIRBank,
        sync_t_ms: f64,
        beta_range: (f64, f64),
    ) -> Result<Self> {
        if utterances.is_empty() {
            return Err(Error::InvalidArg("augmentation needs at least one utterance".into()));
        }
        if rir_bank.rirs.is_empty() {
            return Err(Error::InvalidArg("augmentation needs at least one impulse response".into()));
        }
        let rate = transforms.responses[0].adc_rate;
        let longest = utterances.iter().map(Waveform::len).max().unwrap();
        for u in &utterances {
            if u.sample_rate != rate {
                return Err(Error::Shape(format!(
                    "utterance at {} Hz, transforms measured at {rate} Hz",
                    u.sample_rate
                )));
            }
            if u.is_empty() {
                return Err(Error::InvalidArg("empty utterance in the augmentation pool".into()));
            }
        }
        for (_, g) in &rir_bank.rirs {
            if g.sample_rate != rate {
                return Err(Error::Shape("impulse response rate mismatch".into()));
            }
        }
        if let Some(shortest) = transforms.noise.clips.iter().map(|c| c.wave.len()).min() {
            if shortest < longest {
                return Err(Error::Prerequisite(format!(
                    "carrier noise clips must cover the longest utterance: need {:.2} s, shortest clip is {:.2} s",
                    longest as f64 / rate as f64,
                    shortest as f64 / rate as f64
                )));
            }
        }
        Ok(AugmentConfig { transforms, utterances, rir_bank, sync_t_ms, beta_range, defense: None })
    }

    /// Craft against a defended receiver: `spec` is applied to every mixed
    /// recording before the recognizer sees it, with gradients pulled back
    /// through it. VAD is rejected here because it cannot carry a gradient.
    pub fn with_defense(mut self, spec: &DefenseSpec) -> Result<Self> {
        self.defense = Some(AdaptiveDefense::new(spec, self.rate())?);
        Ok(self)
    }

    pub(crate) fn rate(&self) -> u32 {
        self.transforms.responses[0].adc_rate
    }
}

// ---------------------------------------------------------------------------
// On-disk form: float32 WAV next to a plain-text sidecar holding the spec
// snapshot and training history.

fn fmt_kv(out: &mut String, key: &str, value: impl std::fmt::Display) {
    out.push_str(key);
    out.push_str(" = ");
    out.push_str(&value.to_string());
    out.push('\n');
}

/// Write `<path>` as float32 WAV and the metadata beside it with a `.txt`
/// extension.
pub fn save_perturbation(p: &Perturbation, wav_path: &Path) -> Result<()> {
    write_wav(wav_path, &p.samples, SampleFormat::Float32)?;
    let mut meta = String::new();
    fmt_kv(&mut meta, "kind", p.spec.kind.label());
    fmt_kv(&mut meta, "target", &p.spec.target);
    fmt_kv(&mut meta, "delta_len_s", p.spec.delta_len_s);
    fmt_kv(&mut meta, "xi_len_s", p.spec.xi_len_s);
    fmt_kv(&mut meta, "epsilon", p.spec.epsilon);
    fmt_kv(&mut meta, "max_epoch", p.spec.max_epoch);
    match p.spec.obj_value {
        Some(v) => fmt_kv(&mut meta, "obj_value", v),
        None => fmt_kv(&mut meta, "obj_value", "auto"),
    }
    fmt_kv(&mut meta, "learning_rate", p.spec.learning_rate);
    fmt_kv(&mut meta, "pairs_per_iter", p.spec.pairs_per_iter);
    fmt_kv(&mut meta, "sync_t_ms", p.spec.sync_t_ms);
    fmt_kv(&mut meta, "beta_lo", p.spec.beta_range.0);
    fmt_kv(&mut meta, "beta_hi", p.spec.beta_range.1);
    fmt_kv(&mut meta, "seed", p.spec.seed);
    fmt_kv(&mut meta, "epochs_run", p.epochs_run());
    match p.final_loss() {
        Some(v) => fmt_kv(&mut meta, "final_loss", v),
        None => fmt_kv(&mut meta, "final_loss", "none"),
    }
    let log: Vec<String> = p.loss_log.iter().map(f64::to_string).collect();
    fmt_kv(&mut meta, "loss_log", log.join(" "));
    std::fs::write(wav_path.with_extension("txt"), meta)?;
    Ok(())
}

/// Load a perturbation written by [`save_perturbation`]. Samples come back
/// at float32 precision.
pub fn load_perturbation(wav_path: &Path) -> Result<Perturbation> {
    let samples = read_wav(wav_path)?;
    let meta_path = wav_path.with_extension("txt");
    let raw = std::fs::read_to_string(&meta_path)?;
    let mut get = std::collections::HashMap::new();
    for line in raw.lines() {
        if let Some((k, v)) = line.split_once('=') {
            get.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    let field = |k: &str| -> Result<String> {
        get.get(k)
            .cloned()
            .ok_or_else(|| Error::Format(format!("{}: missing {k}", meta_path.display())))
    };
    let num = |k: &str| -> Result<f64> {
        field(k)?
            .parse()
            .map_err(|_| Error::Format(format!("{}: bad number for {k}", meta_path.display())))
    };
    let obj_raw = field("obj_value")?;
    let spec = PerturbationSpec {
        kind: PerturbKind::parse(&field("kind")?)?,
        target: field("target")?,
        delta_len_s: num("delta_len_s")?,
        xi_len_s: num("xi_len_s")?,
        epsilon: num("epsilon")?,
        max_epoch: num("max_epoch")? as usize,
        obj_value: if obj_raw == "auto" { None } else { Some(num("obj_value")?) },
        learning_rate: num("learning_rate")?,
        pairs_per_iter: num("pairs_per_iter")? as usize,
        sync_t_ms: num("sync_t_ms")?,
        beta_range: (num("beta_lo")?, num("beta_hi")?),
        seed: num("seed")? as u64,
    };
    let loss_log = field("loss_log")?
        .split_whitespace()
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::Format(format!("{}: bad loss_log entry", meta_path.display())))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(Perturbation { samples, spec, loss_log })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_validation_catches_bad_fields() {
        assert!(PerturbationSpec::silence(1).validate().is_ok());
        assert!(PerturbationSpec::universal("open the door", 1).validate().is_ok());

        let mut s = PerturbationSpec::silence(1);
        s.epsilon = 1.2;
        assert!(s.validate().is_err(), "epsilon above 1 must fail");
        s.epsilon = 0.0;
        assert!(s.validate().is_err(), "epsilon of 0 must fail");

        let mut s = PerturbationSpec::silence(1);
        s.beta_range = (1.5, 0.5);
        assert!(s.validate().is_err(), "reversed beta range must fail");
        s.beta_range = (0.0, 1.0);
        assert!(s.validate().is_err(), "zero beta must fail");

        let mut s = PerturbationSpec::silence(1);
        s.target = "hello".into();
        assert!(s.validate().is_err(), "silence with a target must fail");

        let mut s = PerturbationSpec::universal("", 1);
        s.target.clear();
        assert!(s.validate().is_err(), "universal without a target must fail");

        let s = PerturbationSpec::universal("open the døor", 1);
        assert!(s.validate().is_err(), "target outside the alphabet must fail");
    }

    #[test]
    fn compose_concatenates_exactly_when_lengths_fit() {
        let delta = Waveform::new(vec![1.0; 19200], 16000);
        let xi = Waveform::new(vec![-1.0; 80000], 16000);
        let out = compose_alter_and_mute(&delta, &xi, 6.2).unwrap();
        assert_eq!(out.len(), 99200);
        assert!(out.samples[..19200].iter().all(|&v| v == 1.0));
        assert!(out.samples[19200..].iter().all(|&v| v == -1.0));
    }

    #[test]
    fn compose_tiles_and_truncates_the_mute_segment() {
        let delta = Waveform::new(vec![2.0; 16000], 16000);
        let xi = Waveform::new((0..8000).map(|i| i as f64).collect(), 16000);
        // 1 s delta + 3.4 s of xi = 6.8 tiles: two full, one cut short
        let out = compose_alter_and_mute(&delta, &xi, 4.4).unwrap();
        assert_eq!(out.len(), 70400);
        assert_eq!(out.samples[16000], 0.0);
        assert_eq!(out.samples[16000 + 8000], 0.0, "second tile restarts");
        assert_eq!(out.samples[16000 + 16000 + 6399], 6399.0, "truncated third tile");
    }

    #[test]
    fn compose_never_truncates_the_rewrite_segment() {
        let delta = Waveform::new(vec![1.0; 19200], 16000);
        let xi = Waveform::new(vec![0.5; 100], 16000);
        assert!(compose_alter_and_mute(&delta, &xi, 1.0).is_err());
        // exactly delta-sized is fine and uses no xi
        let out = compose_alter_and_mute(&delta, &xi, 1.2).unwrap();
        assert_eq!(out.len(), 19200);
    }

    #[test]
    fn cover_tiles_silence_and_freezes_universal_tail() {
        let p: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let c = attack_cover(&p, None, 250).unwrap();
        assert_eq!(c.len(), 250);
        assert_eq!(c[0], 0.0);
        assert_eq!(c[100], 0.0, "tile restarts");
        assert_eq!(c[249], 49.0);

        let xi: Vec<f64> = vec![-3.0; 40];
        let c = attack_cover(&p, Some(&xi), 200).unwrap();
        assert_eq!(&c[..100], &p[..]);
        assert!(c[100..].iter().all(|&v| v == -3.0));

        // windows shorter than the head just see its prefix
        let c = attack_cover(&p, Some(&xi), 60).unwrap();
        assert_eq!(&c[..], &p[..60]);
    }

    #[test]
    fn perturbation_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("xi.wav");
        let mut spec = PerturbationSpec::universal("mute volume", 77);
        spec.obj_value = Some(3.25);
        spec.epsilon = 0.6;
        let p = Perturbation {
            samples: Waveform::new(vec![0.25, -0.6, 0.1, 0.59999], 16000),
            spec,
            loss_log: vec![10.5, 4.25, 3.0],
        };
        save_perturbation(&p, &path).unwrap();
        let q = load_perturbation(&path).unwrap();
        assert_eq!(q.spec, p.spec);
        assert_eq!(q.loss_log, p.loss_log);
        assert_eq!(q.epochs_run(), 3);
        assert_eq!(q.final_loss(), Some(3.0));
        // float32 storage: equal after the same quantization
        let expect: Vec<f64> = p.samples.samples.iter().map(|&v| v as f32 as f64).collect();
        assert_eq!(q.samples.samples, expect);

        // silence spec with auto objective survives too
        let p2 = Perturbation {
            samples: Waveform::new(vec![0.0; 8], 16000),
            spec: PerturbationSpec::silence(3),
            loss_log: vec![],
        };
        let path2 = dir.path().join("d.wav");
        save_perturbation(&p2, &path2).unwrap();
        let q2 = load_perturbation(&path2).unwrap();
        assert_eq!(q2.spec, p2.spec);
        assert!(q2.loss_log.is_empty());
        assert_eq!(q2.final_loss(), None);
    }

    #[test]
    fn surrogate_set_is_noise_free_and_identity_capable() {
        let set = surrogate_transform_set(vec![1.0], 16000).unwrap();
        assert_eq!(set.responses.len(), 1);
        assert!(set.noise.clips.is_empty());
        let m = Waveform::new(vec![0.3, -0.2, 0.7], 16000);
        let out = crate::chanest::apply_transform(&m, &set.responses[0], None, 1.0, &set.params).unwrap();
        assert_eq!(out.samples, m.samples);
        assert!(surrogate_transform_set(vec![], 16000).is_err());
    }
}
