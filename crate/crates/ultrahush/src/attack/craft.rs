//! The perturbation optimizer. Each epoch samples channel conditions and
//! victim utterances, forms the received mixes, and takes one Adam step on
//! the perturbation under the recognizer's CTC loss — toward the empty
//! transcript for silence, toward a fixed command for universal rewrites.

use super::augment::{draw_beta, rir_augment};
use super::{attack_cover, AugmentConfig, PerturbKind, Perturbation, PerturbationSpec};
use crate::asr::{input_gradient, num_frames, AcousticModel};
use crate::chanest::{apply_transform, sample_pair, transform_pullback};
use crate::error::{Error, Result};
use crate::signal::Waveform;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Victim utterances drawn per epoch (without replacement within the epoch).
const BATCH_UTTS: usize = 8;

/// One epoch's worth of random decisions, separated from the arithmetic so
/// the objective is a pure function of the perturbation. Draw order:
/// (1) `pairs_per_iter` (response, noise) pairs; (2) the utterance batch;
/// (3) per utterance an impulse response and a volume; (4) per pair a noise
/// offset; (5) per pair and utterance an onset shift.
pub(crate) struct EpochDraws {
    pub pairs: Vec<(usize, Option<usize>)>,
    pub utts: Vec<usize>,
    pub rirs: Vec<usize>,
    pub betas: Vec<f64>,
    pub noise_offsets: Vec<usize>,
    pub shifts: Vec<Vec<usize>>,
    pub cover_len: usize,
}

pub(crate) fn sample_epoch_draws<R: Rng>(
    rng: &mut R,
    spec: &PerturbationSpec,
    aug: &AugmentConfig,
) -> EpochDraws {
    let have_noise = !aug.transforms.noise.clips.is_empty();
    let pairs: Vec<(usize, Option<usize>)> = (0..spec.pairs_per_iter)
        .map(|_| {
            if have_noise {
                let (r, n) = sample_pair(&aug.transforms, rng).expect("checked non-empty");
                (r, Some(n))
            } else {
                (rng.gen_range(0..aug.transforms.responses.len()), None)
            }
        })
        .collect();
    let utts = rand::seq::index::sample(
        rng,
        aug.utterances.len(),
        BATCH_UTTS.min(aug.utterances.len()),
    )
    .into_vec();
    let mut rirs = Vec::with_capacity(utts.len());
    let mut betas = Vec::with_capacity(utts.len());
    for _ in &utts {
        rirs.push(rng.gen_range(0..aug.rir_bank.rirs.len()));
        betas.push(draw_beta(aug.beta_range, rng));
    }
    let cover_len = utts.iter().map(|&u| aug.utterances[u].len()).max().unwrap();
    let noise_offsets = pairs
        .iter()
        .map(|&(_, n)| match n {
            Some(ni) => {
                let clip_len = aug.transforms.noise.clips[ni].wave.len();
                rng.gen_range(0..=clip_len - cover_len)
            }
            None => 0,
        })
        .collect();
    let rate = aug.rate() as f64;
    let max_shift = (aug.sync_t_ms.max(0.0) / 1000.0 * rate).round() as usize;
    let shifts = (0..pairs.len())
        .map(|_| (0..utts.len()).map(|_| rng.gen_range(0..=max_shift)).collect())
        .collect();
    EpochDraws { pairs, utts, rirs, betas, noise_offsets, shifts, cover_len }
}

/// Mean loss over the epoch's (pair × utterance) grid and its gradient with
/// respect to the perturbation. The mixes are hard-clipped to [-1, 1]; the
/// gradient treats the clip as straight-through (identity inside the rails,
/// zero outside). Utterances the target cannot align into are skipped.
pub(crate) fn epoch_objective(
    p: &[f64],
    xi: Option<&Waveform>,
    draws: &EpochDraws,
    spec: &PerturbationSpec,
    aug: &AugmentConfig,
    model: &AcousticModel,
) -> Result<(f64, Vec<f64>)> {
    let rate = aug.rate();
    let cover =
        Waveform::new(attack_cover(p, xi.map(|w| w.samples.as_slice()), draws.cover_len)?, rate);

    // speech side is fixed for the epoch: x-tilde = beta * (g * x)
    let mut speech = Vec::with_capacity(draws.utts.len());
    for (slot, &u) in draws.utts.iter().enumerate() {
        let (_, g) = &aug.rir_bank.rirs[draws.rirs[slot]];
        let wet = rir_augment(&aug.utterances[u], g)?;
        speech.push(wet.scaled(draws.betas[slot]).samples);
    }

    let mut grad_p = vec![0.0; p.len()];
    let mut loss_sum = 0.0;
    let mut terms = 0usize;
    for (k, &(ri, ni)) in draws.pairs.iter().enumerate() {
        let resp = &aug.transforms.responses[ri];
        let noise = ni.map(|i| (&aug.transforms.noise.clips[i].wave, draws.noise_offsets[k]));
        let trans = apply_transform(&cover, resp, noise, resp.d_ref_m, &aug.transforms.params)?;

        let mut g_trans = vec![0.0; draws.cover_len];
        for (slot, x) in speech.iter().enumerate() {
            let s = draws.shifts[k][slot];
            let pre: Vec<f64> = (0..x.len())
                .map(|i| x[i] + if i >= s { trans.samples[i - s] } else { 0.0 })
                .collect();
            let mix = Waveform::new(pre.iter().map(|v| v.clamp(-1.0, 1.0)).collect(), rate);
            // an adaptive defense sits between the microphone and the recognizer
            let heard = match &aug.defense {
                Some(d) => d.apply(&mix)?,
                None => mix.clone(),
            };
            let ig = input_gradient(model, &heard, &spec.target)?;
            if !ig.feasible {
                continue;
            }
            if !ig.loss.is_finite() {
                return Err(Error::Divergence(format!(
                    "non-finite loss on pair {k}, utterance slot {slot}"
                )));
            }
            loss_sum += ig.loss;
            terms += 1;
            let g_mix = match &aug.defense {
                Some(d) => d.pullback(mix.len(), &ig.grad),
                None => ig.grad,
            };
            for i in s..x.len() {
                if pre[i].abs() <= 1.0 {
                    g_trans[i - s] += g_mix[i];
                }
            }
        }
        let g_cover = transform_pullback(&g_trans, resp, resp.d_ref_m, &aug.transforms.params)?;
        match spec.kind {
            PerturbKind::Silence => {
                for (j, g) in g_cover.iter().enumerate() {
                    grad_p[j % p.len()] += g;
                }
            }
            PerturbKind::Universal => {
                for (gp, g) in grad_p.iter_mut().zip(&g_cover) {
                    *gp += g;
                }
            }
        }
    }
    if terms == 0 {
        return Err(Error::Prerequisite(format!(
            "target {:?} cannot align into any sampled utterance",
            spec.target
        )));
    }
    let scale = 1.0 / terms as f64;
    for g in &mut grad_p {
        *g *= scale;
    }
    Ok((loss_sum * scale, grad_p))
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

struct VecAdam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl VecAdam {
    fn new(n: usize) -> Self {
        VecAdam { m: vec![0.0; n], v: vec![0.0; n], step: 0 }
    }

    fn update(&mut self, p: &mut [f64], g: &[f64], lr: f64) {
        self.step += 1;
        let bc1 = 1.0 - BETA1.powi(self.step as i32);
        let bc2 = 1.0 - BETA2.powi(self.step as i32);
        for i in 0..p.len() {
            self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * g[i];
            self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * g[i] * g[i];
            p[i] -= lr * (self.m[i] / bc1) / ((self.v[i] / bc2).sqrt() + ADAM_EPS);
        }
    }
}

/// Early-stop threshold when the spec leaves it open: a small per-frame loss
/// allowance times the mean frame count of the utterance pool — silencing
/// must drive every frame to blank, rewriting gets a looser 0.05.
fn resolve_obj_value(spec: &PerturbationSpec, aug: &AugmentConfig) -> Result<f64> {
    let mut frames = 0usize;
    for u in &aug.utterances {
        frames += num_frames(u.len())?;
    }
    let mean = frames as f64 / aug.utterances.len() as f64;
    let coeff = match spec.kind {
        PerturbKind::Silence => 0.01,
        PerturbKind::Universal => 0.05,
    };
    Ok(coeff * mean)
}

fn craft_inner(
    spec: &PerturbationSpec,
    aug: &AugmentConfig,
    model: &AcousticModel,
    xi: Option<&Waveform>,
) -> Result<Perturbation> {
    spec.validate()?;
    let rate = aug.rate();
    let len_s = match spec.kind {
        PerturbKind::Silence => spec.xi_len_s,
        PerturbKind::Universal => spec.delta_len_s,
    };
    let p_len = (len_s * rate as f64).round() as usize;
    let obj = match spec.obj_value {
        Some(v) => v,
        None => resolve_obj_value(spec, aug)?,
    };
    let mut p = vec![0.0; p_len];
    let mut adam = VecAdam::new(p_len);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut loss_log = Vec::new();
    for epoch in 0..spec.max_epoch {
        let draws = sample_epoch_draws(&mut rng, spec, aug);
        let (loss, grad) = epoch_objective(&p, xi, &draws, spec, aug, model).map_err(|e| match e {
            Error::Divergence(msg) => Error::Divergence(format!("epoch {epoch}: {msg}")),
            other => other,
        })?;
        loss_log.push(loss);
        if loss <= obj {
            break; // p already met the objective; stepping would change it
        }
        adam.update(&mut p, &grad, spec.learning_rate);
        for v in &mut p {
            *v = v.clamp(-spec.epsilon, spec.epsilon);
        }
    }
    Ok(Perturbation { samples: Waveform::new(p, rate), spec: spec.clone(), loss_log })
}

/// Optimize a silence perturbation ξ: every augmented mix should decode to
/// the empty transcript.
pub fn craft_silence(
    spec: &PerturbationSpec,
    aug: &AugmentConfig,
    model: &AcousticModel,
) -> Result<Perturbation> {
    if spec.kind != PerturbKind::Silence {
        return Err(Error::InvalidArg("craft_silence needs a silence spec".into()));
    }
    craft_inner(spec, aug, model, None)
}

/// Optimize a rewrite segment δ in front of a frozen silence perturbation:
/// the concatenation δ:ξ should make any mix decode to the target command.
/// Gradients flow only into δ.
pub fn craft_universal(
    spec: &PerturbationSpec,
    aug: &AugmentConfig,
    model: &AcousticModel,
    xi: &Perturbation,
) -> Result<Perturbation> {
    if spec.kind != PerturbKind::Universal {
        return Err(Error::InvalidArg("craft_universal needs a universal spec".into()));
    }
    if xi.spec.kind != PerturbKind::Silence {
        return Err(Error::InvalidArg("the mute segment must come from a silence run".into()));
    }
    if xi.samples.is_empty() {
        return Err(Error::InvalidArg("the mute segment is empty".into()));
    }
    if xi.samples.sample_rate != aug.rate() {
        return Err(Error::Shape(format!(
            "mute segment at {} Hz, crafting at {} Hz",
            xi.samples.sample_rate,
            aug.rate()
        )));
    }
    craft_inner(spec, aug, model, Some(&xi.samples))
}
