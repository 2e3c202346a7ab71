//! Carrier-induced anomalous noise: deterministic, position-dependent colored
//! noise injected by the oracle whenever the carrier is on.
//!
//! Shape: white Gaussian → 8-band random equalizer (log-spaced 35 Hz–3 kHz,
//! gains drawn from the position-dependent stream, lowest band emphasized so
//! the noise carries a distinct sub-50 Hz signature) → causal low-pass at
//! 4 kHz → RMS calibration. Calibration always measures the same fixed-length
//! prefix so that clips of different lengths agree sample-for-sample.

use super::ChannelScene;
use crate::signal::{apply_filter, bp_biquad, FilterSpec, Waveform};
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

const NUM_BANDS: usize = 8;
const BAND_LO_HZ: f64 = 35.0;
const BAND_HI_HZ: f64 = 3000.0;
const LOWBAND_EMPHASIS: f64 = 2.0;
/// Samples used for RMS calibration regardless of requested length.
const CAL_LEN: usize = 65536;

fn position_rng(scene: &ChannelScene) -> rand_chacha::ChaCha8Rng {
    let mut seed = [0u8; 32];
    seed[0..8].copy_from_slice(&scene.noise_seed.to_le_bytes());
    seed[8..16].copy_from_slice(&scene.angle_deg.to_bits().to_le_bytes());
    seed[16..24].copy_from_slice(&scene.distance_m.to_bits().to_le_bytes());
    seed[24..32].copy_from_slice(&(scene.carrier_hz.to_bits() ^ 0x616e6f6d616c7973).to_le_bytes());
    rand_chacha::ChaCha8Rng::from_seed(seed)
}

/// Deterministic anomalous-noise clip for this scene, `len` samples at
/// `ultra_rate`. Target RMS is `noise_rms · propagation_gain`; zero disables.
pub fn anomalous_noise(scene: &ChannelScene, len: usize) -> Waveform {
    if scene.noise_rms == 0.0 || len == 0 {
        return Waveform::zeros(len, scene.ultra_rate);
    }
    let mut rng = position_rng(scene);
    let rate = scene.ultra_rate as f64;

    // Band gains first (fixed draw count keeps the white stream aligned).
    let mut gains = [0.0f64; NUM_BANDS];
    for g in gains.iter_mut() {
        let u: f64 = rand::Rng::gen(&mut rng);
        // log-uniform in [0.25, 1]
        *g = (0.25f64.ln() * (1.0 - u)).exp();
    }
    gains[0] *= LOWBAND_EMPHASIS;

    let gen_len = len.max(CAL_LEN);
    let white: Vec<f64> = (0..gen_len)
        .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
        .collect();

    let ratio = (BAND_HI_HZ / BAND_LO_HZ).powf(1.0 / (NUM_BANDS - 1) as f64);
    let mut mixed = vec![0.0f64; gen_len];
    let mut fc = BAND_LO_HZ;
    for &g in gains.iter() {
        // Constant-peak band-pass output power scales with bandwidth fc/Q, so
        // weight by 1/sqrt(fc) to let the gains govern the spectral shape.
        let w = g / fc.sqrt();
        let band = bp_biquad(fc, rate, 1.0).process(&white);
        for (m, b) in mixed.iter_mut().zip(&band) {
            *m += w * b;
        }
        fc *= ratio;
    }

    let shaped = apply_filter(
        &Waveform::new(mixed, scene.ultra_rate),
        &FilterSpec::low_pass(4000.0).causal().order(4),
    )
    .expect("static low-pass spec is valid");

    let prefix_ms: f64 =
        shaped.samples[..CAL_LEN.min(gen_len)].iter().map(|v| v * v).sum::<f64>()
            / CAL_LEN.min(gen_len) as f64;
    let target = scene.noise_rms * scene.propagation_gain();
    let scale = if prefix_ms > 0.0 { target / prefix_ms.sqrt() } else { 0.0 };
    Waveform::new(
        shaped.samples[..len].iter().map(|v| v * scale).collect(),
        scene.ultra_rate,
    )
}
