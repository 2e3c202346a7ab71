//! Minibatch Adam training for the acoustic model with per-epoch held-out
//! scoring.

use super::ctc::ctc_loss;
use super::decode::{cer, greedy_decode};
use super::features::{featurize, Spectrogram};
use super::model::{AcousticModel, ParamGrads};
use super::encode;
use crate::error::{Error, Result};
use crate::signal::Waveform;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One utterance ready for training: precomputed features plus the encoded
/// transcript.
#[derive(Debug, Clone)]
pub struct TrainItem {
    pub feats: Spectrogram,
    pub tokens: Vec<usize>,
    pub text: String,
}

impl TrainItem {
    pub fn from_audio(audio: &Waveform, text: &str) -> Result<Self> {
        Ok(TrainItem { feats: featurize(audio)?, tokens: encode(text)?, text: text.to_string() })
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// Stop once the held-out character error rate reaches this value.
    pub stop_at_cer: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { learning_rate: 1e-3, batch_size: 16, max_epochs: 50, seed: 0, stop_at_cer: None }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epochs_run: usize,
    /// Mean per-utterance CTC loss per epoch.
    pub train_loss: Vec<f64>,
    /// Held-out character error rate per epoch; empty when no held-out set
    /// was given.
    pub held_out_cer: Vec<f64>,
    pub final_cer: Option<f64>,
}

/// Mean per-utterance character error rate of greedy decodes.
pub fn eval_cer(model: &AcousticModel, items: &[TrainItem]) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::InvalidArg("cannot score an empty evaluation set".into()));
    }
    let mut total = 0.0;
    for item in items {
        let hyp = greedy_decode(&model.forward(&item.feats)?);
        total += cer(&item.text, &hyp);
    }
    Ok(total / items.len() as f64)
}

struct Adam {
    m: ParamGrads,
    v: ParamGrads,
    step: u64,
    lr: f64,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Adam {
    fn new(lr: f64) -> Self {
        Adam { m: ParamGrads::zeros(), v: ParamGrads::zeros(), step: 0, lr }
    }

    fn update(&mut self, model: &mut AcousticModel, grads: &ParamGrads) {
        self.step += 1;
        let bc1 = 1.0 - BETA1.powi(self.step as i32);
        let bc2 = 1.0 - BETA2.powi(self.step as i32);
        let lr = self.lr;
        let apply = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..p.len() {
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                p[i] -= lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + ADAM_EPS);
            }
        };
        apply(&mut model.w1, &grads.w1, &mut self.m.w1, &mut self.v.w1);
        apply(&mut model.b1, &grads.b1, &mut self.m.b1, &mut self.v.b1);
        apply(&mut model.w2, &grads.w2, &mut self.m.w2, &mut self.v.w2);
        apply(&mut model.b2, &grads.b2, &mut self.m.b2, &mut self.v.b2);
        apply(&mut model.w3, &grads.w3, &mut self.m.w3, &mut self.v.w3);
        apply(&mut model.b3, &grads.b3, &mut self.m.b3, &mut self.v.b3);
    }
}

fn add_scaled(dst: &mut ParamGrads, src: &ParamGrads, scale: f64) {
    let pairs = [
        (&mut dst.w1, &src.w1),
        (&mut dst.b1, &src.b1),
        (&mut dst.w2, &src.w2),
        (&mut dst.b2, &src.b2),
        (&mut dst.w3, &src.w3),
        (&mut dst.b3, &src.b3),
    ];
    for (d, s) in pairs {
        for (a, b) in d.iter_mut().zip(s) {
            *a += scale * b;
        }
    }
}

/// Train `model` on `items`, scoring `held_out` after every epoch. Returns
/// the parameters that achieved the best held-out error rate (the final
/// parameters when no held-out set is given).
///
/// Utterances whose transcript cannot fit in their frame count are skipped
/// rather than poisoning the batch with infinities.
pub fn train(
    mut model: AcousticModel,
    items: &[TrainItem],
    held_out: &[TrainItem],
    cfg: &TrainConfig,
) -> Result<(AcousticModel, TrainReport)> {
    if items.is_empty() {
        return Err(Error::InvalidArg("training set is empty".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(cfg.learning_rate);
    let mut order: Vec<usize> = (0..items.len()).collect();

    let mut report = TrainReport {
        epochs_run: 0,
        train_loss: Vec::new(),
        held_out_cer: Vec::new(),
        final_cer: None,
    };
    let mut best: Option<(f64, AcousticModel)> = None;

    for _epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut scored = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = ParamGrads::zeros();
            let mut used = 0usize;
            for &idx in batch {
                let item = &items[idx];
                let (logits, cache) = model.forward_cached(&item.feats)?;
                let res = ctc_loss(&logits, &item.tokens);
                if !res.feasible {
                    continue;
                }
                let (g, _) = model.backward(&cache, &res.grad, true, false);
                add_scaled(&mut grads, &g.unwrap(), 1.0);
                epoch_loss += res.loss;
                used += 1;
                scored += 1;
            }
            if used == 0 {
                continue;
            }
            let inv = 1.0 / used as f64;
            let scale = |v: &mut Vec<f64>| v.iter_mut().for_each(|x| *x *= inv);
            scale(&mut grads.w1);
            scale(&mut grads.b1);
            scale(&mut grads.w2);
            scale(&mut grads.b2);
            scale(&mut grads.w3);
            scale(&mut grads.b3);
            adam.update(&mut model, &grads);
        }
        report.epochs_run += 1;
        model.epochs_trained += 1;
        report.train_loss.push(if scored > 0 { epoch_loss / scored as f64 } else { f64::INFINITY });

        if !held_out.is_empty() {
            let c = eval_cer(&model, held_out)?;
            report.held_out_cer.push(c);
            if best.as_ref().map_or(true, |(b, _)| c < *b) {
                best = Some((c, model.clone()));
            }
            if cfg.stop_at_cer.is_some_and(|stop| c <= stop) {
                break;
            }
        }
    }

    if let Some((c, m)) = best {
        report.final_cer = Some(c);
        model = m;
    }
    Ok((model, report))
}
