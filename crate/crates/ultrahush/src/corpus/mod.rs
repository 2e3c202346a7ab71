//! Self-contained data supply: a deterministic toy spoken-command
//! synthesizer with train/craft/test split management, synthetic room
//! impulse responses, ambient-noise presets, and WAV-directory ingestion.

mod room;
mod voice;

pub use room::{
    ambient_noise, build_rir_bank, synth_rir, AmbientKind, RIRBank, RoomClass,
};
pub use voice::{synth_utterance, ToyVoice, SYNTH_RATE};

use crate::asr::token_index;
use crate::error::{Error, Result};
use crate::signal::{read_wav, resample, write_wav, SampleFormat, Waveform};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;

pub const MAX_PHRASE_CHARS: usize = 40;

/// A command text over the recognizer alphabet, at most 40 lowercase chars.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Phrase {
    pub id: String,
    pub text: String,
}

impl Phrase {
    pub fn new(id: &str, text: &str) -> Result<Self> {
        if text.is_empty() || text.chars().count() > MAX_PHRASE_CHARS {
            return Err(Error::InvalidArg(format!(
                "phrase {id:?} must be 1..={MAX_PHRASE_CHARS} characters"
            )));
        }
        if let Some(c) = text.chars().find(|&c| token_index(c).is_none()) {
            return Err(Error::InvalidArg(format!(
                "phrase {id:?} contains {c:?}; only lowercase letters, space, and apostrophe are allowed"
            )));
        }
        Ok(Phrase { id: id.to_string(), text: text.to_string() })
    }
}

/// Twenty stock training phrases, disjoint from [`attack_targets`] so the
/// recognizer never trains on a command an attacker will inject.
pub fn builtin_phrases() -> Vec<Phrase> {
    const TEXTS: [&str; 20] = [
        "turn on the light",
        "turn off the light",
        "play some music",
        "stop the music",
        "increase the volume",
        "decrease the volume",
        "turn up the heat",
        "turn down the heat",
        "what time is it",
        "set an alarm for six",
        "lock the front gate",
        "switch on the fan",
        "switch off the fan",
        "read my messages",
        "send a reply",
        "pause the video",
        "resume the video",
        "show the weather",
        "dim the kitchen lights",
        "close the curtains",
    ];
    TEXTS
        .iter()
        .enumerate()
        .map(|(i, t)| Phrase::new(&format!("p{i:02}"), t).unwrap())
        .collect()
}

/// Ten injection targets for crafting and evaluation.
pub fn attack_targets() -> Vec<Phrase> {
    const TEXTS: [&str; 10] = [
        "start recording",
        "set a timer",
        "open the door",
        "take the picture",
        "call nine one one",
        "cancel my morning alarm",
        "turn on airplane mode",
        "open my photo album",
        "what is going on twitter",
        "mute volume and turn off the wifi",
    ];
    TEXTS
        .iter()
        .enumerate()
        .map(|(i, t)| Phrase::new(&format!("t{i:02}"), t).unwrap())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    /// Recognizer training material.
    Train,
    /// Utterances the perturbation optimizer may see.
    Craft,
    /// Held out from both training and crafting.
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Craft => "craft",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "craft" => Ok(Split::Craft),
            "test" => Ok(Split::Test),
            other => Err(Error::Format(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DatasetItem {
    pub id: String,
    pub text: String,
    pub split: Split,
    pub audio: Waveform,
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub items: Vec<DatasetItem>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn split(&self, s: Split) -> Vec<&DatasetItem> {
        self.items.iter().filter(|i| i.split == s).collect()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn item_seed(master: u64, p: usize, v: usize, r: usize) -> u64 {
    splitmix64(master ^ splitmix64(((p as u64) << 42) | ((v as u64) << 21) | r as u64))
}

/// Render every (phrase, voice, rendition) triple and assign 70/10/20
/// train/craft/test splits by a seeded shuffle. Each triple gets its own
/// derived seed, so the corpus is bit-stable under the master seed and no
/// triple can land in two splits.
pub fn build_corpus(
    phrases: &[Phrase],
    voices: &[ToyVoice],
    renditions: usize,
    seed: u64,
) -> Result<Dataset> {
    if phrases.is_empty() || voices.is_empty() || renditions == 0 {
        return Err(Error::InvalidArg("corpus needs phrases, voices, and renditions".into()));
    }
    let mut items = Vec::with_capacity(phrases.len() * voices.len() * renditions);
    for (pi, p) in phrases.iter().enumerate() {
        for (vi, v) in voices.iter().enumerate() {
            for r in 0..renditions {
                let (audio, text) = synth_utterance(p, v, item_seed(seed, pi, vi, r))?;
                items.push(DatasetItem {
                    id: format!("{}-v{vi:02}-r{r:02}", p.id),
                    text,
                    split: Split::Train,
                    audio,
                });
            }
        }
    }
    let n = items.len();
    let n_train = n * 7 / 10;
    let n_craft = n / 10;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x73706c6974)); // "split"
    order.shuffle(&mut rng);
    for (rank, &idx) in order.iter().enumerate() {
        items[idx].split = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_craft {
            Split::Craft
        } else {
            Split::Test
        };
    }
    Ok(Dataset { items })
}

/// Write a dataset as one 16-bit WAV per item plus a
/// `id<TAB>transcript<TAB>split` manifest.
pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut manifest = String::new();
    for item in &ds.items {
        write_wav(&dir.join(format!("{}.wav", item.id)), &item.audio, SampleFormat::Pcm16)?;
        manifest.push_str(&format!("{}\t{}\t{}\n", item.id, item.text, item.split.as_str()));
    }
    std::fs::write(dir.join("manifest.tsv"), manifest)?;
    Ok(())
}

/// Load a WAV directory against a manifest. Audio is resampled to 16 kHz
/// when needed and peak-normalized to 0.9; transcripts must stay inside the
/// alphabet.
pub fn load_wav_dir(dir: &Path, manifest: &Path) -> Result<Dataset> {
    if !manifest.exists() {
        let has_wavs = dir.exists()
            && std::fs::read_dir(dir)?
                .filter_map(|e| e.ok())
                .any(|e| e.path().extension().is_some_and(|x| x == "wav"));
        if has_wavs {
            return Err(Error::Prerequisite(format!(
                "{} has WAV files but no manifest {}",
                dir.display(),
                manifest.display()
            )));
        }
        eprintln!("warning: {} is empty, loading an empty dataset", dir.display());
        return Ok(Dataset::default());
    }
    let raw = std::fs::read_to_string(manifest)?;
    let mut items = Vec::new();
    for (no, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [id, text, split] = fields[..] else {
            return Err(Error::Format(format!(
                "manifest line {}: expected id<TAB>transcript<TAB>split, got {line:?}",
                no + 1
            )));
        };
        if let Some(c) = text.chars().find(|&c| token_index(c).is_none()) {
            return Err(Error::Format(format!(
                "manifest line {}: transcript contains {c:?} outside the alphabet: {line:?}",
                no + 1
            )));
        }
        let split = Split::parse(split)
            .map_err(|e| Error::Format(format!("manifest line {}: {e}", no + 1)))?;
        let mut audio = read_wav(&dir.join(format!("{id}.wav")))?;
        if audio.sample_rate != SYNTH_RATE {
            audio = resample(&audio, SYNTH_RATE)?;
        }
        let peak = audio.samples.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        if peak > 0.0 {
            let g = 0.9 / peak;
            for v in &mut audio.samples {
                *v *= g;
            }
        }
        items.push(DatasetItem { id: id.to_string(), text: text.to_string(), split, audio });
    }
    if items.is_empty() {
        eprintln!("warning: manifest {} lists no items", manifest.display());
    }
    Ok(Dataset { items })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn phrase_rules_enforced() {
        assert!(Phrase::new("a", "open the door").is_ok());
        assert!(Phrase::new("b", "").is_err());
        assert!(Phrase::new("c", &"x".repeat(41)).is_err());
        assert!(Phrase::new("d", "Open the door").is_err(), "uppercase is out");
        assert!(Phrase::new("e", "call 911").is_err(), "digits are out");
        assert!(Phrase::new("f", "don't panic").is_ok());
    }

    #[test]
    fn builtin_lists_are_valid_and_disjoint() {
        let train = builtin_phrases();
        let targets = attack_targets();
        assert_eq!(train.len(), 20);
        assert_eq!(targets.len(), 10);
        let train_texts: HashSet<&str> = train.iter().map(|p| p.text.as_str()).collect();
        assert_eq!(train_texts.len(), 20);
        for t in &targets {
            assert!(!train_texts.contains(t.text.as_str()), "{:?} leaked into training", t.text);
        }
    }

    #[test]
    fn corpus_sizes_splits_and_determinism() {
        let phrases = &builtin_phrases()[..4];
        let voices = ToyVoice::standard_set(3).unwrap();
        let ds = build_corpus(phrases, &voices, 5, 1234).unwrap();
        assert_eq!(ds.len(), 60);
        assert_eq!(ds.split(Split::Train).len(), 42);
        assert_eq!(ds.split(Split::Craft).len(), 6);
        assert_eq!(ds.split(Split::Test).len(), 12);

        let ids: HashSet<&str> = ds.items.iter().map(|i| i.id.as_str()).collect();
        assert_eq!(ids.len(), 60, "every (phrase, voice, rendition) triple appears once");

        let again = build_corpus(phrases, &voices, 5, 1234).unwrap();
        for (a, b) in ds.items.iter().zip(&again.items) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.split, b.split);
            assert_eq!(a.audio.samples, b.audio.samples, "{} not bit-stable", a.id);
        }
    }

    #[test]
    fn reseeding_moves_split_membership_not_sizes() {
        let phrases = &builtin_phrases()[..4];
        let voices = ToyVoice::standard_set(2).unwrap();
        let a = build_corpus(phrases, &voices, 5, 1).unwrap();
        let b = build_corpus(phrases, &voices, 5, 2).unwrap();
        for s in [Split::Train, Split::Craft, Split::Test] {
            assert_eq!(a.split(s).len(), b.split(s).len());
        }
        let moved = a
            .items
            .iter()
            .zip(&b.items)
            .filter(|(x, y)| {
                assert_eq!(x.id, y.id);
                x.split != y.split
            })
            .count();
        assert!(moved > 0, "a different seed should shuffle membership");
    }

    #[test]
    fn empty_inputs_rejected() {
        let voices = ToyVoice::standard_set(1).unwrap();
        assert!(build_corpus(&[], &voices, 1, 0).is_err());
        assert!(build_corpus(&builtin_phrases()[..1], &[], 1, 0).is_err());
        assert!(build_corpus(&builtin_phrases()[..1], &voices, 0, 0).is_err());
    }

    #[test]
    fn dataset_round_trips_through_disk() {
        let phrases = &builtin_phrases()[..2];
        let voices = ToyVoice::standard_set(1).unwrap();
        let ds = build_corpus(phrases, &voices, 2, 7).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();

        let back = load_wav_dir(dir.path(), &dir.path().join("manifest.tsv")).unwrap();
        assert_eq!(back.len(), ds.len());
        for (a, b) in ds.items.iter().zip(&back.items) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.text, b.text);
            assert_eq!(a.split, b.split);
            assert_eq!(a.audio.sample_rate, 16000);
            let peak = b.audio.samples.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
            assert!((peak - 0.9).abs() < 1e-3, "peak {peak} after normalization");
        }
    }

    #[test]
    fn foreign_rates_are_resampled() {
        let dir = tempfile::tempdir().unwrap();
        let w = Waveform::tone(1000.0, 0.5, 0.25, 44100, 0.0);
        write_wav(&dir.path().join("hi.wav"), &w, SampleFormat::Pcm16).unwrap();
        std::fs::write(dir.path().join("manifest.tsv"), "hi\thello there\ttrain\n").unwrap();
        let ds = load_wav_dir(dir.path(), &dir.path().join("manifest.tsv")).unwrap();
        assert_eq!(ds.items[0].audio.sample_rate, 16000);
    }

    #[test]
    fn bad_manifest_lines_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let w = Waveform::tone(500.0, 0.5, 0.1, 16000, 0.0);
        write_wav(&dir.path().join("x.wav"), &w, SampleFormat::Pcm16).unwrap();

        std::fs::write(dir.path().join("manifest.tsv"), "x\tcall 911\ttrain\n").unwrap();
        let err = load_wav_dir(dir.path(), &dir.path().join("manifest.tsv")).unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");

        std::fs::write(dir.path().join("manifest.tsv"), "x\thello\tvalidation\n").unwrap();
        assert!(load_wav_dir(dir.path(), &dir.path().join("manifest.tsv")).is_err());

        std::fs::write(dir.path().join("manifest.tsv"), "x hello train\n").unwrap();
        assert!(load_wav_dir(dir.path(), &dir.path().join("manifest.tsv")).is_err());
    }

    #[test]
    fn empty_directory_loads_empty() {
        let dir = tempfile::tempdir().unwrap();
        let ds = load_wav_dir(dir.path(), &dir.path().join("manifest.tsv")).unwrap();
        assert!(ds.is_empty());

        let w = Waveform::tone(500.0, 0.5, 0.1, 16000, 0.0);
        write_wav(&dir.path().join("orphan.wav"), &w, SampleFormat::Pcm16).unwrap();
        assert!(load_wav_dir(dir.path(), &dir.path().join("manifest.tsv")).is_err());
    }
}
