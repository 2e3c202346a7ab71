//! Compact CTC speech recognizer: log-mel features with an exact pullback
//! to the waveform, a context-window MLP acoustic model, CTC loss and
//! gradients, greedy decoding, character error rate, and Adam training.

mod ctc;
mod decode;
mod features;
mod model;
mod train;

pub use ctc::{ctc_loss, ctc_loss_brute_force, CtcResult};
pub use decode::{cer, greedy_decode};
pub use features::{
    featurize, featurize_pullback, num_frames, Spectrogram, FEATURE_HOP, FEATURE_RATE,
    FEATURE_WINDOW, NUM_MELS,
};
pub use model::{AcousticModel, LogitsMatrix, CONTEXT, HIDDEN, IN_DIM};
pub use train::{eval_cer, train, TrainConfig, TrainItem, TrainReport};

use crate::blob::{read_f64s, write_f64s};
use crate::error::{Error, Result};
use crate::signal::Waveform;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Output alphabet size: blank plus 26 letters, space, and apostrophe.
pub const NUM_TOKENS: usize = 29;
pub const BLANK: usize = 0;

const CHARS: &str = "abcdefghijklmnopqrstuvwxyz '";

/// Index of a transcript character, if it is in the alphabet. Blank (0) has
/// no character.
pub fn token_index(c: char) -> Option<usize> {
    CHARS.chars().position(|x| x == c).map(|i| i + 1)
}

/// Character for a non-blank token index.
pub fn index_token(i: usize) -> Option<char> {
    (1..NUM_TOKENS).contains(&i).then(|| CHARS.chars().nth(i - 1).unwrap())
}

/// Encode a transcript to token indices. ASCII uppercase is folded to
/// lowercase; anything else outside the alphabet is an error.
pub fn encode(text: &str) -> Result<Vec<usize>> {
    text.chars()
        .map(|c| {
            let c = c.to_ascii_lowercase();
            token_index(c)
                .ok_or_else(|| Error::InvalidArg(format!("character {c:?} is not in the alphabet")))
        })
        .collect()
}

/// CTC loss of a target transcript and its exact gradient with respect to
/// every input sample.
#[derive(Debug, Clone)]
pub struct InputGradient {
    pub loss: f64,
    /// One value per input sample; all zeros when the target is infeasible.
    pub grad: Vec<f64>,
    pub feasible: bool,
}

/// Differentiate the full recognition loss — features, acoustic model, CTC —
/// back to the raw waveform samples.
pub fn input_gradient(model: &AcousticModel, audio: &Waveform, target: &str) -> Result<InputGradient> {
    let tokens = encode(target)?;
    let feats = featurize(audio)?;
    let (logits, cache) = model.forward_cached(&feats)?;
    let res = ctc_loss(&logits, &tokens);
    if !res.feasible {
        return Ok(InputGradient { loss: f64::INFINITY, grad: vec![0.0; audio.len()], feasible: false });
    }
    if res.loss.is_nan() {
        // Poisoned forward pass: report it rather than backpropagating NaN.
        return Ok(InputGradient { loss: f64::NAN, grad: vec![0.0; audio.len()], feasible: true });
    }
    let (_, dx) = model.backward(&cache, &res.grad, false, true);
    let dfeats = AcousticModel::unstack_context(&dx.unwrap(), feats.frames);
    let grad = featurize_pullback(audio, &dfeats)?;
    Ok(InputGradient { loss: res.loss, grad, feasible: true })
}

#[derive(Serialize, Deserialize)]
struct CheckpointManifest {
    mels: usize,
    context: usize,
    hidden: usize,
    tokens: usize,
    seed: u64,
    epochs_trained: u32,
    tensors: Vec<TensorMeta>,
}

#[derive(Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    file: String,
    len: usize,
}

fn tensor_views(model: &AcousticModel) -> [(&'static str, &Vec<f64>); 6] {
    [
        ("w1", &model.w1),
        ("b1", &model.b1),
        ("w2", &model.w2),
        ("b2", &model.b2),
        ("w3", &model.w3),
        ("b3", &model.b3),
    ]
}

/// Write the model to a directory: `manifest.json` plus one raw
/// little-endian f64 blob per tensor. Round-trips bit-exactly.
pub fn save_checkpoint(model: &AcousticModel, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut tensors = Vec::new();
    for (name, data) in tensor_views(model) {
        let file = format!("{name}.f64");
        write_f64s(&dir.join(&file), data)?;
        tensors.push(TensorMeta { name: name.to_string(), file, len: data.len() });
    }
    let manifest = CheckpointManifest {
        mels: NUM_MELS,
        context: CONTEXT,
        hidden: HIDDEN,
        tokens: NUM_TOKENS,
        seed: model.seed,
        epochs_trained: model.epochs_trained,
        tensors,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Format(format!("manifest serialization failed: {e}")))?;
    std::fs::write(dir.join("manifest.json"), json)?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<AcousticModel> {
    let raw = std::fs::read_to_string(dir.join("manifest.json"))?;
    let manifest: CheckpointManifest =
        serde_json::from_str(&raw).map_err(|e| Error::Format(format!("bad manifest: {e}")))?;
    if manifest.mels != NUM_MELS
        || manifest.context != CONTEXT
        || manifest.hidden != HIDDEN
        || manifest.tokens != NUM_TOKENS
    {
        return Err(Error::Format(format!(
            "checkpoint shape {}×(±{})→{}→{} does not match this build",
            manifest.mels, manifest.context, manifest.hidden, manifest.tokens
        )));
    }
    let mut model = AcousticModel::zeroed();
    model.seed = manifest.seed;
    model.epochs_trained = manifest.epochs_trained;
    for meta in &manifest.tensors {
        let data = read_f64s(&dir.join(&meta.file))?;
        if data.len() != meta.len {
            return Err(Error::Format(format!(
                "tensor {} has {} values, manifest says {}",
                meta.name,
                data.len(),
                meta.len
            )));
        }
        let slot = match meta.name.as_str() {
            "w1" => &mut model.w1,
            "b1" => &mut model.b1,
            "w2" => &mut model.w2,
            "b2" => &mut model.b2,
            "w3" => &mut model.w3,
            "b3" => &mut model.b3,
            other => return Err(Error::Format(format!("unknown tensor {other:?}"))),
        };
        if data.len() != slot.len() {
            return Err(Error::Format(format!(
                "tensor {} has {} values, expected {}",
                meta.name,
                data.len(),
                slot.len()
            )));
        }
        *slot = data;
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn alphabet_round_trips() {
        assert_eq!(token_index('a'), Some(1));
        assert_eq!(token_index('z'), Some(26));
        assert_eq!(token_index(' '), Some(27));
        assert_eq!(token_index('\''), Some(28));
        assert_eq!(index_token(0), None);
        assert_eq!(index_token(29), None);
        for i in 1..NUM_TOKENS {
            assert_eq!(token_index(index_token(i).unwrap()), Some(i));
        }
    }

    #[test]
    fn encode_folds_case_and_rejects_strangers() {
        assert_eq!(encode("It's On").unwrap(), encode("it's on").unwrap());
        assert!(encode("héllo").is_err());
        assert!(encode("tab\there").is_err());
        assert_eq!(encode("").unwrap(), Vec::<usize>::new());
    }

    fn random_audio(len: usize, seed: u64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Waveform::new((0..len).map(|_| rng.gen_range(-0.4..0.4)).collect(), 16000)
    }

    #[test]
    fn waveform_gradient_matches_finite_differences() {
        let model = AcousticModel::new_random(19);
        let audio = random_audio(3200, 5);
        let got = input_gradient(&model, &audio, "hi").unwrap();
        assert!(got.feasible);
        for &n in &[10usize, 400, 801, 1600, 2222, 2600, 2999, 3100, 150, 90] {
            let mut hi = audio.clone();
            hi.samples[n] += 1e-6;
            let mut lo = audio.clone();
            lo.samples[n] -= 1e-6;
            let fd = (input_gradient(&model, &hi, "hi").unwrap().loss
                - input_gradient(&model, &lo, "hi").unwrap().loss)
                / 2e-6;
            let rel = (got.grad[n] - fd).abs() / fd.abs().max(1e-8);
            assert!(rel <= 1e-4, "sample {n}: analytic {} vs fd {fd} (rel {rel:.2e})", got.grad[n]);
        }
    }

    #[test]
    fn saturated_blank_model_has_vanishing_gradient() {
        let mut model = AcousticModel::zeroed();
        model.b3[BLANK] = 25.0;
        let audio = random_audio(4800, 6);
        let got = input_gradient(&model, &audio, "").unwrap();
        let norm: f64 = got.grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        assert!(norm < 1e-3, "gradient norm {norm} should be saturated away");
        assert!(got.loss < 1e-6, "an all-blank model scores empty text almost surely");
    }

    #[test]
    fn samples_without_feature_coverage_get_zero_gradient() {
        let model = AcousticModel::new_random(20);
        let audio = random_audio(16160, 7);
        let got = input_gradient(&model, &audio, "a").unwrap();
        assert!(got.grad[16080..].iter().all(|&g| g == 0.0));
        assert!(got.grad[..16080].iter().any(|&g| g != 0.0));
    }

    #[test]
    fn infeasible_target_reports_infinite_loss() {
        let model = AcousticModel::new_random(21);
        // 400 samples → a single frame, can't emit two tokens
        let audio = random_audio(400, 8);
        let got = input_gradient(&model, &audio, "no").unwrap();
        assert!(!got.feasible);
        assert!(got.loss.is_infinite());
        assert!(got.grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn checkpoint_round_trips_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut model = AcousticModel::new_random(77);
        model.epochs_trained = 13;
        save_checkpoint(&model, dir.path()).unwrap();
        let back = load_checkpoint(dir.path()).unwrap();
        assert_eq!(model, back);
    }

    #[test]
    fn truncated_tensor_blob_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let model = AcousticModel::new_random(78);
        save_checkpoint(&model, dir.path()).unwrap();
        let path = dir.path().join("w2.f64");
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(load_checkpoint(dir.path()).is_err());
    }
}
