//! Judging a crafted perturbation the honest way: play its cover through
//! the physical channel simulation (not the attacker's estimate), mix with
//! victim speech under the deployment augmentation grid, and decode.

use super::augment::{draw_beta, rir_augment};
use super::{attack_cover, PerturbKind, Perturbation};
use crate::asr::{cer, featurize, greedy_decode, num_frames, AcousticModel};
use crate::channel::{modulate_dsb, transmit, ChannelScene};
use crate::corpus::RIRBank;
use crate::defense::{apply_defense, DefenseSpec};
use crate::error::{Error, Result};
use crate::signal::Waveform;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;

/// One held-out victim utterance with its true transcript.
#[derive(Debug, Clone)]
pub struct EvalUtterance {
    pub id: String,
    pub audio: Waveform,
    pub text: String,
}

/// The evaluation grid: where the emitter stands and how the deployment
/// conditions vary. Victim speech stays dry unless a room bank is given; a
/// defense, when set, processes every mixed recording before decoding.
#[derive(Debug, Clone)]
pub struct EvalGrid {
    /// (distance in meters, angle in degrees) per scene.
    pub scenes: Vec<(f64, f64)>,
    pub sync_t_ms: f64,
    pub beta_range: (f64, f64),
    pub speech_rir: Option<RIRBank>,
    pub defense: Option<DefenseSpec>,
    pub seed: u64,
}

impl Default for EvalGrid {
    fn default() -> Self {
        EvalGrid {
            scenes: vec![(1.0, 90.0)],
            sync_t_ms: 100.0,
            beta_range: (0.5, 1.5),
            speech_rir: None,
            defense: None,
            seed: 0,
        }
    }
}

/// One (utterance, scene) draw and its outcome.
#[derive(Debug, Clone)]
pub struct EvalCell {
    pub utterance_id: String,
    pub distance_m: f64,
    pub angle_deg: f64,
    pub shift_ms: f64,
    pub beta: f64,
    pub decoded: String,
    pub target: String,
    pub exact_match: bool,
    pub cer: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSummary {
    pub distance_m: f64,
    pub angle_deg: f64,
    pub success_rate: f64,
    pub mean_cer: f64,
    pub cells: usize,
}

/// Full evaluation record: every cell plus per-scene and overall aggregates.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub kind: PerturbKind,
    pub target: String,
    pub cells: Vec<EvalCell>,
    pub scenes: Vec<SceneSummary>,
    pub success_rate: f64,
    pub mean_cer: f64,
}

/// Mix the perturbation into every test utterance through the physical
/// channel at each grid scene and decode.
///
/// Success means decoding exactly the attack target — the empty transcript
/// for silence perturbations. The `cer` column scores the target for
/// rewrites; for silence (no target text to score against) it scores the
/// true transcript instead, so it reads as "how much of the victim's speech
/// survived".
///
/// Draws per cell, scene-major: onset shift, volume, then (if a room bank is
/// present) the speech impulse response.
pub fn evaluate_attack(
    p: &Perturbation,
    xi: Option<&Perturbation>,
    test: &[EvalUtterance],
    grid: &EvalGrid,
    model: &AcousticModel,
    base: &ChannelScene,
) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::InvalidArg("evaluation needs at least one utterance".into()));
    }
    if grid.scenes.is_empty() {
        return Err(Error::InvalidArg("evaluation needs at least one scene".into()));
    }
    let (blo, bhi) = grid.beta_range;
    if !(blo > 0.0 && blo <= bhi) {
        return Err(Error::InvalidArg(format!("beta range [{blo}, {bhi}]")));
    }
    let rate = base.adc_rate;
    for u in test {
        if u.audio.sample_rate != rate {
            return Err(Error::Shape(format!(
                "utterance {} at {} Hz, channel records at {rate} Hz",
                u.id, u.audio.sample_rate
            )));
        }
    }
    let longest = test.iter().map(|u| u.audio.len()).max().unwrap();
    let cover = Waveform::new(
        attack_cover(
            &p.samples.samples,
            xi.map(|w| w.samples.samples.as_slice()),
            longest,
        )?,
        rate,
    );
    let max_shift = (grid.sync_t_ms.max(0.0) / 1000.0 * rate as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(grid.seed);

    let mut cells = Vec::with_capacity(grid.scenes.len() * test.len());
    let mut scenes = Vec::with_capacity(grid.scenes.len());
    for &(d_m, angle) in &grid.scenes {
        let scene = base.at(d_m, angle);
        // one pass through the physical channel per scene, reused by every cell
        let received = transmit(&modulate_dsb(&cover, &scene)?, &scene)?;
        let mut hits = 0usize;
        let mut cer_sum = 0.0;
        for u in test {
            let s = rng.gen_range(0..=max_shift);
            let beta = draw_beta(grid.beta_range, &mut rng);
            let speech = match &grid.speech_rir {
                Some(bank) => {
                    let (_, g) = &bank.rirs[rng.gen_range(0..bank.rirs.len())];
                    rir_augment(&u.audio, g)?.scaled(beta)
                }
                None => u.audio.scaled(beta),
            };
            let mix: Vec<f64> = (0..u.audio.len())
                .map(|i| {
                    let r = if i >= s { received.samples[i - s] } else { 0.0 };
                    (speech.samples[i] + r).clamp(-1.0, 1.0)
                })
                .collect();
            let heard = match &grid.defense {
                Some(spec) => apply_defense(spec, &Waveform::new(mix, rate))?,
                None => Waveform::new(mix, rate),
            };
            // a defense may trim the recording below one analysis window;
            // nothing left to hear decodes as nothing
            let decoded = if num_frames(heard.len()).is_ok() {
                greedy_decode(&model.forward(&featurize(&heard)?)?)
            } else {
                String::new()
            };
            let exact_match = decoded == p.spec.target;
            let cer_value = if p.spec.target.is_empty() {
                cer(&u.text, &decoded)
            } else {
                cer(&p.spec.target, &decoded)
            };
            hits += exact_match as usize;
            cer_sum += cer_value;
            cells.push(EvalCell {
                utterance_id: u.id.clone(),
                distance_m: d_m,
                angle_deg: angle,
                shift_ms: s as f64 / rate as f64 * 1000.0,
                beta,
                decoded,
                target: p.spec.target.clone(),
                exact_match,
                cer: cer_value,
            });
        }
        scenes.push(SceneSummary {
            distance_m: d_m,
            angle_deg: angle,
            success_rate: hits as f64 / test.len() as f64,
            mean_cer: cer_sum / test.len() as f64,
            cells: test.len(),
        });
    }
    let success_rate = cells.iter().filter(|c| c.exact_match).count() as f64 / cells.len() as f64;
    let mean_cer = cells.iter().map(|c| c.cer).sum::<f64>() / cells.len() as f64;
    Ok(EvalReport { kind: p.spec.kind, target: p.spec.target.clone(), cells, scenes, success_rate, mean_cer })
}

impl EvalReport {
    /// Per-scene success rate in the order the grid listed its scenes.
    pub fn scene_rates(&self) -> Vec<f64> {
        self.scenes.iter().map(|s| s.success_rate).collect()
    }

    /// One row per cell. Transcripts contain only letters, spaces, and
    /// apostrophes, so no quoting is needed.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out =
            String::from("utterance_id,distance_m,angle_deg,shift_ms,beta,decoded,target,exact_match,cer\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{:.3},{:.6},{},{},{},{:.6}\n",
                c.utterance_id,
                c.distance_m,
                c.angle_deg,
                c.shift_ms,
                c.beta,
                c.decoded,
                c.target,
                c.exact_match,
                c.cer
            ));
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let scenes: Vec<serde_json::Value> = self
            .scenes
            .iter()
            .map(|s| {
                serde_json::json!({
                    "distance_m": s.distance_m,
                    "angle_deg": s.angle_deg,
                    "success_rate": s.success_rate,
                    "mean_cer": s.mean_cer,
                    "cells": s.cells,
                })
            })
            .collect();
        let summary = serde_json::json!({
            "kind": self.kind.label(),
            "target": self.target,
            "cells": self.cells.len(),
            "success_rate": self.success_rate,
            "mean_cer": self.mean_cer,
            "scenes": scenes,
        });
        let text = serde_json::to_string_pretty(&summary)
            .map_err(|e| Error::Format(format!("report encode: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::PerturbationSpec;
    use crate::corpus::{synth_utterance, Phrase, ToyVoice};

    fn fixture() -> (Perturbation, Vec<EvalUtterance>, AcousticModel, ChannelScene) {
        let v = ToyVoice::standard(2).unwrap();
        let mut test = Vec::new();
        for (i, text) in ["go on", "stop it"].iter().enumerate() {
            let (audio, t) =
                synth_utterance(&Phrase::new("e", text).unwrap(), &v, 40 + i as u64).unwrap();
            test.push(EvalUtterance { id: format!("u{i}"), audio, text: t });
        }
        let p = Perturbation {
            samples: Waveform::zeros(4800, 16000),
            spec: PerturbationSpec::silence(1),
            loss_log: vec![],
        };
        (p, test, AcousticModel::new_random(11), ChannelScene::default())
    }

    #[test]
    fn zero_perturbation_never_silences_and_aggregates_add_up() {
        let (p, test, model, base) = fixture();
        let grid = EvalGrid {
            scenes: vec![(1.0, 90.0), (2.0, 90.0)],
            sync_t_ms: 10.0,
            beta_range: (1.0, 1.0),
            ..EvalGrid::default()
        };
        let report = evaluate_attack(&p, None, &test, &grid, &model, &base).unwrap();
        assert_eq!(report.cells.len(), 4);
        assert_eq!(report.scenes.len(), 2);
        assert!(report.cells.iter().all(|c| !c.exact_match), "an untrained recognizer never decodes to empty");
        assert_eq!(report.success_rate, 0.0);

        let by_hand: f64 = report.cells.iter().map(|c| c.cer).sum::<f64>() / 4.0;
        assert!((report.mean_cer - by_hand).abs() < 1e-12);
        assert_eq!(report.scenes.iter().map(|s| s.cells).sum::<usize>(), 4);
        for c in &report.cells {
            assert!(c.shift_ms >= 0.0 && c.shift_ms <= 10.0);
            assert_eq!(c.beta, 1.0);
            assert_eq!(c.target, "");
        }
    }

    #[test]
    fn evaluation_is_deterministic() {
        let (p, test, model, base) = fixture();
        let grid =
            EvalGrid { scenes: vec![(1.0, 90.0)], sync_t_ms: 50.0, seed: 42, ..EvalGrid::default() };
        let a = evaluate_attack(&p, None, &test, &grid, &model, &base).unwrap();
        let b = evaluate_attack(&p, None, &test, &grid, &model, &base).unwrap();
        for (x, y) in a.cells.iter().zip(&b.cells) {
            assert_eq!(x.decoded, y.decoded);
            assert_eq!(x.shift_ms, y.shift_ms);
            assert_eq!(x.beta, y.beta);
        }
        assert_eq!(a.success_rate, b.success_rate);
        assert_eq!(a.mean_cer, b.mean_cer);
    }

    #[test]
    fn report_files_have_the_documented_shape() {
        let (p, test, model, base) = fixture();
        let grid = EvalGrid { scenes: vec![(1.0, 90.0)], ..EvalGrid::default() };
        let report = evaluate_attack(&p, None, &test, &grid, &model, &base).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("cells.csv");
        let json_path = dir.path().join("summary.json");
        report.write_csv(&csv_path).unwrap();
        report.write_json(&json_path).unwrap();

        let csv = std::fs::read_to_string(&csv_path).unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "utterance_id,distance_m,angle_deg,shift_ms,beta,decoded,target,exact_match,cer"
        );
        assert_eq!(lines.count(), report.cells.len());
        for line in csv.lines().skip(1) {
            assert_eq!(line.split(',').count(), 9, "bad row: {line}");
        }

        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
        assert_eq!(json["kind"], "silence");
        assert_eq!(json["cells"], 2);
        assert!(json["scenes"].as_array().unwrap().len() == 1);
        assert!(json["success_rate"].is_number());
    }

    #[test]
    fn defended_evaluation_runs_and_repeats() {
        let (p, test, model, base) = fixture();
        let grid = EvalGrid {
            scenes: vec![(1.0, 90.0)],
            defense: Some(DefenseSpec::BandPass { low_hz: 50.0, high_hz: 3000.0 }),
            ..EvalGrid::default()
        };
        let a = evaluate_attack(&p, None, &test, &grid, &model, &base).unwrap();
        let b = evaluate_attack(&p, None, &test, &grid, &model, &base).unwrap();
        assert_eq!(a.cells.len(), 2);
        for (x, y) in a.cells.iter().zip(&b.cells) {
            assert_eq!(x.decoded, y.decoded);
        }
        // vad is legal at evaluation time even though it cannot be crafted against
        let vad_grid = EvalGrid {
            scenes: vec![(1.0, 90.0)],
            defense: Some(DefenseSpec::Vad { threshold_db: -15.0 }),
            ..EvalGrid::default()
        };
        evaluate_attack(&p, None, &test, &vad_grid, &model, &base).unwrap();
    }

    #[test]
    fn universal_cells_score_against_the_target() {
        let (_, test, model, base) = fixture();
        let mut spec = PerturbationSpec::universal("go on", 1);
        spec.delta_len_s = 0.3;
        let p = Perturbation { samples: Waveform::zeros(4800, 16000), spec, loss_log: vec![] };
        let xi = Perturbation {
            samples: Waveform::zeros(2400, 16000),
            spec: PerturbationSpec::silence(0),
            loss_log: vec![],
        };
        let grid = EvalGrid { scenes: vec![(1.0, 90.0)], ..EvalGrid::default() };
        let report = evaluate_attack(&p, Some(&xi), &test, &grid, &model, &base).unwrap();
        for c in &report.cells {
            assert_eq!(c.target, "go on");
            assert_eq!(c.cer, cer("go on", &c.decoded));
        }
    }
}
