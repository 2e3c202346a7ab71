//! Attacker-side channel estimation: measure the demodulating channel with
//! exponential sine sweeps and carrier-only recordings, then predict what any
//! digital baseband will look like after the ultrasonic journey — without
//! touching the oracle again.
//!
//! Everything here lives at the recorder rate. The measured impulse response
//! absorbs the whole chain (modulation depth, nonlinear gain, frontend
//! filters) at the reference position; other distances are extrapolated by
//! the attenuation law, other angles get their own sweep.

mod apply;
mod sweep;

pub use apply::{apply_transform, attenuation_scale, sample_pair, transform_pullback};
pub use sweep::{estimate_response, SweepSpec};

use crate::channel::{carrier_noise, ChannelScene};
use crate::error::{Error, Result};
use crate::signal::Waveform;
use std::path::Path;

/// Default impulse-response length: 256 ms at 16 kHz, long enough for the
/// frontend filters' ringing, short enough for fast convolution.
pub const RESPONSE_TAPS: usize = 4096;

/// Measured baseband impulse response of the whole ultrasonic chain at one
/// (angle, reference-distance) position.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelResponse {
    pub taps: Vec<f64>,
    pub angle_deg: f64,
    pub d_ref_m: f64,
    pub adc_rate: u32,
}

/// One carrier-only recording with its position label.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseClip {
    pub angle_deg: f64,
    pub d_m: f64,
    pub wave: Waveform,
}

/// Carrier-only recordings collected across positions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NoiseBank {
    pub clips: Vec<NoiseClip>,
}

/// Attenuation-law parameters shared by a transform set (mirrored from the
/// scene config). `attenuation_power` selects whether the distance scale
/// enters the prediction linearly (1) or squared (2, default — the dominant
/// demodulation path is quadratic in carrier gain).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformParams {
    pub a0: f64,
    pub n_att: f64,
    pub carrier_hz: f64,
    pub attenuation_power: u32,
}

impl Default for TransformParams {
    fn default() -> Self {
        let scene = ChannelScene::default();
        TransformParams {
            a0: scene.a0,
            n_att: scene.n_att,
            carrier_hz: scene.carrier_hz,
            attenuation_power: 2,
        }
    }
}

/// The attacker's complete channel knowledge: measured responses, captured
/// noise clips, and the attenuation law for distance extrapolation.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformSet {
    pub responses: Vec<ChannelResponse>,
    pub noise: NoiseBank,
    pub params: TransformParams,
}

impl TransformSet {
    pub fn new(responses: Vec<ChannelResponse>, noise: NoiseBank, params: TransformParams) -> Result<Self> {
        if responses.is_empty() {
            return Err(Error::InvalidArg("transform set needs at least one measured response".into()));
        }
        Ok(TransformSet { responses, noise, params })
    }
}

/// Record the carrier alone at every listed position.
pub fn capture_noise_bank(scenes: &[ChannelScene], duration_s: f64) -> Result<NoiseBank> {
    if scenes.is_empty() {
        return Err(Error::InvalidArg("noise bank needs at least one scene".into()));
    }
    let mut clips = Vec::with_capacity(scenes.len());
    for scene in scenes {
        clips.push(NoiseClip {
            angle_deg: scene.angle_deg,
            d_m: scene.distance_m,
            wave: carrier_noise(scene, duration_s)?,
        });
    }
    Ok(NoiseBank { clips })
}

// ---------------------------------------------------------------------------
// On-disk bundle: manifest.json + one raw little-endian f64 file per response
// and per noise clip. Round-trips are bit-exact.

#[derive(serde::Serialize, serde::Deserialize)]
struct Manifest {
    adc_rate: u32,
    a0: f64,
    n_att: f64,
    carrier_hz: f64,
    attenuation_power: u32,
    responses: Vec<EntryMeta>,
    noise: Vec<EntryMeta>,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct EntryMeta {
    angle_deg: f64,
    d_m: f64,
    file: String,
}

use crate::blob::{read_f64s, write_f64s};

impl TransformSet {
    /// Write the bundle into `dir` (created if missing).
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let adc_rate = self.responses[0].adc_rate;
        let mut manifest = Manifest {
            adc_rate,
            a0: self.params.a0,
            n_att: self.params.n_att,
            carrier_hz: self.params.carrier_hz,
            attenuation_power: self.params.attenuation_power,
            responses: Vec::new(),
            noise: Vec::new(),
        };
        for (i, r) in self.responses.iter().enumerate() {
            let file = format!("response_{i:03}.f64");
            write_f64s(&dir.join(&file), &r.taps)?;
            manifest.responses.push(EntryMeta { angle_deg: r.angle_deg, d_m: r.d_ref_m, file });
        }
        for (i, c) in self.noise.clips.iter().enumerate() {
            let file = format!("noise_{i:03}.f64");
            write_f64s(&dir.join(&file), &c.wave.samples)?;
            manifest.noise.push(EntryMeta { angle_deg: c.angle_deg, d_m: c.d_m, file });
        }
        let json = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::Format(format!("manifest encode: {e}")))?;
        std::fs::write(dir.join("manifest.json"), json)?;
        Ok(())
    }

    /// Load a bundle previously written by [`TransformSet::save_dir`].
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(dir.join("manifest.json"))?;
        let manifest: Manifest = serde_json::from_str(&raw)
            .map_err(|e| Error::Format(format!("manifest decode: {e}")))?;
        let mut responses = Vec::with_capacity(manifest.responses.len());
        for m in &manifest.responses {
            responses.push(ChannelResponse {
                taps: read_f64s(&dir.join(&m.file))?,
                angle_deg: m.angle_deg,
                d_ref_m: m.d_m,
                adc_rate: manifest.adc_rate,
            });
        }
        let mut clips = Vec::with_capacity(manifest.noise.len());
        for m in &manifest.noise {
            clips.push(NoiseClip {
                angle_deg: m.angle_deg,
                d_m: m.d_m,
                wave: Waveform::new(read_f64s(&dir.join(&m.file))?, manifest.adc_rate),
            });
        }
        TransformSet::new(
            responses,
            NoiseBank { clips },
            TransformParams {
                a0: manifest.a0,
                n_att: manifest.n_att,
                carrier_hz: manifest.carrier_hz,
                attenuation_power: manifest.attenuation_power,
            },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_bank_shapes_and_determinism() {
        let base = ChannelScene::default();
        let scenes = vec![base.clone(), base.at(2.0, 45.0), base.clone()];
        let bank = capture_noise_bank(&scenes, 1.0).unwrap();
        assert_eq!(bank.clips.len(), 3);
        for c in &bank.clips {
            assert_eq!(c.wave.len(), 16000);
            assert_eq!(c.wave.sample_rate, 16000);
        }
        // duplicate scenes give identical clips
        assert_eq!(bank.clips[0].wave.samples, bank.clips[2].wave.samples);
        assert_ne!(bank.clips[0].wave.samples, bank.clips[1].wave.samples);
    }

    #[test]
    fn empty_scene_list_rejected() {
        assert!(capture_noise_bank(&[], 1.0).is_err());
    }

    #[test]
    fn bundle_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let resp = ChannelResponse {
            taps: vec![1.0, -0.25, 1e-17, f64::MIN_POSITIVE, 0.3333333333333333],
            angle_deg: 60.0,
            d_ref_m: 1.0,
            adc_rate: 16000,
        };
        let bank = NoiseBank {
            clips: vec![NoiseClip {
                angle_deg: 60.0,
                d_m: 1.0,
                wave: Waveform::new(vec![0.5, -0.5, 0.123456789e-11], 16000),
            }],
        };
        let set = TransformSet::new(vec![resp], bank, TransformParams::default()).unwrap();
        set.save_dir(dir.path()).unwrap();
        let loaded = TransformSet::load_dir(dir.path()).unwrap();
        assert_eq!(set, loaded);
    }
}
