//! Spectral features separating demodulated-ultrasound injections from
//! natural speech, and a small logistic classifier over them. Demodulation
//! through a square-law channel leaves tells that survive the microphone:
//! excess energy below 50 Hz, fundamental/harmonic envelopes that stop
//! tracking each other, and asymmetric positive/negative peaks.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blob::{read_f64s, write_f64s};
use crate::error::{Error, Result};
use crate::signal::{welch_psd, Waveform};

const NFFT: usize = 1024;
const MIN_LEN_S: f64 = 0.5;
/// Band edges for the two spectral envelopes, Hz.
const FUNDAMENTAL_BAND: (f64, f64) = (50.0, 300.0);
const HARMONIC_BAND: (f64, f64) = (300.0, 3000.0);
/// Envelope sample points per band, mel-spaced.
const ENVELOPE_POINTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipReadFeatures {
    /// Fraction of total power below 50 Hz.
    pub sub50_power: f64,
    /// Pearson r between the log-power envelopes of the fundamental band
    /// (50-300 Hz) and the harmonic band (300-3000 Hz), each sampled at 16
    /// mel-spaced frequencies.
    pub correlation_coeff: f64,
    /// Largest positive peak over the magnitude of the largest negative one.
    pub amplitude_skew: f64,
}

fn mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_inv(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Linear interpolation of the one-sided PSD at frequency `f`.
fn psd_at(psd: &[f64], df: f64, f: f64) -> f64 {
    let pos = (f / df).clamp(0.0, (psd.len() - 1) as f64);
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < psd.len() {
        psd[i] * (1.0 - frac) + psd[i + 1] * frac
    } else {
        psd[i]
    }
}

fn band_envelope(psd: &[f64], df: f64, band: (f64, f64)) -> Vec<f64> {
    let (m_lo, m_hi) = (mel(band.0), mel(band.1));
    (0..ENVELOPE_POINTS)
        .map(|i| {
            let m = m_lo + (m_hi - m_lo) * i as f64 / (ENVELOPE_POINTS - 1) as f64;
            (psd_at(psd, df, mel_inv(m)) + 1e-20).log10()
        })
        .collect()
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va <= 0.0 || vb <= 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

/// Extract the three detector features from at least half a second of audio.
pub fn lipread_features(w: &Waveform) -> Result<LipReadFeatures> {
    let min_len = (MIN_LEN_S * w.sample_rate as f64) as usize;
    if w.len() < min_len.max(NFFT) {
        return Err(Error::InvalidArg(format!(
            "feature extraction needs at least {MIN_LEN_S} s, got {} samples",
            w.len()
        )));
    }
    let pos_peak = w.samples.iter().fold(0.0f64, |a, &x| a.max(x));
    let neg_peak = w.samples.iter().fold(0.0f64, |a, &x| a.min(x)).abs();
    if pos_peak == 0.0 || neg_peak == 0.0 {
        return Err(Error::InvalidArg(
            "amplitude skew undefined: input is silent or one-sided".into(),
        ));
    }
    let psd = welch_psd(w, NFFT)?;
    let df = w.sample_rate as f64 / NFFT as f64;
    let total: f64 = psd.iter().sum();
    let sub50: f64 =
        psd.iter().enumerate().filter(|(k, _)| (*k as f64) * df < 50.0).map(|(_, &p)| p).sum();
    let fund = band_envelope(&psd, df, FUNDAMENTAL_BAND);
    let harm = band_envelope(&psd, df, HARMONIC_BAND);
    Ok(LipReadFeatures {
        sub50_power: if total > 0.0 { sub50 / total } else { 0.0 },
        correlation_coeff: pearson(&fund, &harm),
        amplitude_skew: pos_peak / neg_peak,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectLabel {
    Benign,
    Attack,
}

/// Logistic regression over the three features, standardized by the training
/// statistics baked into the model.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorModel {
    pub weights: [f64; 3],
    pub bias: f64,
    pub threshold: f64,
    pub feat_mean: [f64; 3],
    pub feat_std: [f64; 3],
}

impl DetectorModel {
    fn zscore(&self, f: &LipReadFeatures) -> [f64; 3] {
        let raw = [f.sub50_power, f.correlation_coeff, f.amplitude_skew];
        let mut z = [0.0; 3];
        for i in 0..3 {
            z[i] = (raw[i] - self.feat_mean[i]) / self.feat_std[i];
        }
        z
    }

    /// P(attack) for one feature vector, in [0, 1].
    pub fn probability(&self, f: &LipReadFeatures) -> f64 {
        let z = self.zscore(f);
        let logit = self.bias + (0..3).map(|i| self.weights[i] * z[i]).sum::<f64>();
        1.0 / (1.0 + (-logit).exp())
    }

    pub fn classify(&self, f: &LipReadFeatures) -> DetectLabel {
        if self.probability(f) >= self.threshold {
            DetectLabel::Attack
        } else {
            DetectLabel::Benign
        }
    }
}

/// Classify one recording.
pub fn detect(model: &DetectorModel, w: &Waveform) -> Result<DetectLabel> {
    Ok(model.classify(&lipread_features(w)?))
}

pub struct DetectorTraining {
    pub model: DetectorModel,
    /// Accuracy on the held-out quarter of each class.
    pub holdout_accuracy: f64,
    pub holdout_benign: usize,
    pub holdout_attack: usize,
}

const MIN_PER_CLASS: usize = 100;
const GD_ITERS: usize = 1500;
const GD_LR: f64 = 0.5;
const L2: f64 = 1e-4;

/// Train the detector: features for every clip, a seeded 3:1 train/holdout
/// split per class, then full-batch gradient descent on the logistic loss.
/// Deterministic for a given seed and input order.
pub fn train_detector(
    benign: &[Waveform],
    attack: &[Waveform],
    seed: u64,
) -> Result<DetectorTraining> {
    if benign.len() < MIN_PER_CLASS || attack.len() < MIN_PER_CLASS {
        return Err(Error::Prerequisite(format!(
            "detector training needs at least {MIN_PER_CLASS} clips per class, got {} benign / {} attack",
            benign.len(),
            attack.len()
        )));
    }
    let feats_of = |set: &[Waveform]| -> Result<Vec<[f64; 3]>> {
        set.iter()
            .map(|w| {
                let f = lipread_features(w)?;
                Ok([f.sub50_power, f.correlation_coeff, f.amplitude_skew])
            })
            .collect()
    };
    let benign_f = feats_of(benign)?;
    let attack_f = feats_of(attack)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // benign split drawn first, then attack
    let split = |feats: &[[f64; 3]], rng: &mut ChaCha8Rng| {
        let mut idx: Vec<usize> = (0..feats.len()).collect();
        idx.shuffle(rng);
        let hold = feats.len() / 4;
        let held: Vec<[f64; 3]> = idx[..hold].iter().map(|&i| feats[i]).collect();
        let train: Vec<[f64; 3]> = idx[hold..].iter().map(|&i| feats[i]).collect();
        (train, held)
    };
    let (btrain, bheld) = split(&benign_f, &mut rng);
    let (atrain, aheld) = split(&attack_f, &mut rng);

    let mut feat_mean = [0.0; 3];
    let mut feat_std = [0.0; 3];
    let n_train = (btrain.len() + atrain.len()) as f64;
    for f in btrain.iter().chain(&atrain) {
        for i in 0..3 {
            feat_mean[i] += f[i] / n_train;
        }
    }
    for f in btrain.iter().chain(&atrain) {
        for i in 0..3 {
            feat_std[i] += (f[i] - feat_mean[i]).powi(2) / n_train;
        }
    }
    for s in feat_std.iter_mut() {
        *s = s.sqrt().max(1e-9);
    }

    let mut model = DetectorModel { weights: [0.0; 3], bias: 0.0, threshold: 0.5, feat_mean, feat_std };
    let labelled: Vec<([f64; 3], f64)> = btrain
        .iter()
        .map(|f| (*f, 0.0))
        .chain(atrain.iter().map(|f| (*f, 1.0)))
        .collect();
    for _ in 0..GD_ITERS {
        let mut gw = [0.0; 3];
        let mut gb = 0.0;
        for (raw, y) in &labelled {
            let f = LipReadFeatures {
                sub50_power: raw[0],
                correlation_coeff: raw[1],
                amplitude_skew: raw[2],
            };
            let err = model.probability(&f) - y;
            let z = model.zscore(&f);
            for i in 0..3 {
                gw[i] += err * z[i] / n_train;
            }
            gb += err / n_train;
        }
        for i in 0..3 {
            model.weights[i] -= GD_LR * (gw[i] + L2 * model.weights[i]);
        }
        model.bias -= GD_LR * gb;
    }

    let mut correct = 0usize;
    for f in &bheld {
        let feats = LipReadFeatures {
            sub50_power: f[0],
            correlation_coeff: f[1],
            amplitude_skew: f[2],
        };
        if model.classify(&feats) == DetectLabel::Benign {
            correct += 1;
        }
    }
    for f in &aheld {
        let feats = LipReadFeatures {
            sub50_power: f[0],
            correlation_coeff: f[1],
            amplitude_skew: f[2],
        };
        if model.classify(&feats) == DetectLabel::Attack {
            correct += 1;
        }
    }
    let held_total = bheld.len() + aheld.len();
    Ok(DetectorTraining {
        model,
        holdout_accuracy: correct as f64 / held_total as f64,
        holdout_benign: bheld.len(),
        holdout_attack: aheld.len(),
    })
}

#[derive(Serialize, Deserialize)]
struct DetectorManifest {
    features: usize,
    tensors: Vec<TensorMeta>,
}

#[derive(Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    file: String,
    len: usize,
}

pub fn save_detector(model: &DetectorModel, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let blocks: [(&str, Vec<f64>); 5] = [
        ("weights", model.weights.to_vec()),
        ("bias", vec![model.bias]),
        ("threshold", vec![model.threshold]),
        ("feat_mean", model.feat_mean.to_vec()),
        ("feat_std", model.feat_std.to_vec()),
    ];
    let mut tensors = Vec::new();
    for (name, data) in &blocks {
        let file = format!("{name}.f64");
        write_f64s(&dir.join(&file), data)?;
        tensors.push(TensorMeta { name: (*name).into(), file, len: data.len() });
    }
    let manifest = DetectorManifest { features: 3, tensors };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Format(format!("manifest serialization failed: {e}")))?;
    std::fs::write(dir.join("manifest.json"), json)?;
    Ok(())
}

pub fn load_detector(dir: &Path) -> Result<DetectorModel> {
    let raw = std::fs::read_to_string(dir.join("manifest.json"))?;
    let manifest: DetectorManifest =
        serde_json::from_str(&raw).map_err(|e| Error::Format(format!("bad manifest: {e}")))?;
    if manifest.features != 3 {
        return Err(Error::Format(format!(
            "detector expects 3 features, manifest says {}",
            manifest.features
        )));
    }
    let mut model = DetectorModel {
        weights: [0.0; 3],
        bias: 0.0,
        threshold: 0.5,
        feat_mean: [0.0; 3],
        feat_std: [1.0; 3],
    };
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
        let want3 = |d: &[f64]| -> Result<[f64; 3]> {
            d.try_into()
                .map_err(|_| Error::Format(format!("tensor {} must hold 3 values", meta.name)))
        };
        match meta.name.as_str() {
            "weights" => model.weights = want3(&data)?,
            "feat_mean" => model.feat_mean = want3(&data)?,
            "feat_std" => model.feat_std = want3(&data)?,
            "bias" => model.bias = data[0],
            "threshold" => model.threshold = data[0],
            other => return Err(Error::Format(format!("unknown tensor {other:?}"))),
        }
    }
    Ok(model)
}
