//! Predicting the recorded form of a digital baseband from a measured
//! response, and the sampling/gradient plumbing the optimizer needs.

use super::{ChannelResponse, TransformParams, TransformSet};
use crate::error::{Error, Result};
use crate::signal::{convolve, convolve_full, Waveform};
use rand::Rng;

/// e^{−a0·(2π·carrier)^{n_att}·(d − d_ref)}: carrier attenuation relative to
/// the distance the response was measured at.
pub fn attenuation_scale(resp: &ChannelResponse, d_m: f64, p: &TransformParams) -> Result<f64> {
    if d_m < 0.0 {
        return Err(Error::InvalidArg(format!("negative distance {d_m}")));
    }
    let w = 2.0 * std::f64::consts::PI * p.carrier_hz;
    Ok((-p.a0 * w.powf(p.n_att) * (d_m - resp.d_ref_m)).exp())
}

/// Predicted recording: scale(d)^attenuation_power · (h ∗ m) + noise segment.
///
/// The power is 2 by default because the dominant demodulation path is
/// quadratic in carrier gain. Output is unclipped. The noise segment starts
/// at the caller's offset into the clip.
pub fn apply_transform(
    m: &Waveform,
    resp: &ChannelResponse,
    noise: Option<(&Waveform, usize)>,
    d_m: f64,
    p: &TransformParams,
) -> Result<Waveform> {
    if m.sample_rate != resp.adc_rate {
        return Err(Error::Shape(format!(
            "baseband at {} Hz, response measured at {} Hz",
            m.sample_rate, resp.adc_rate
        )));
    }
    let scale = attenuation_scale(resp, d_m, p)?.powi(p.attenuation_power as i32);
    let mut out = convolve(m, &resp.taps)?;
    for v in out.samples.iter_mut() {
        *v *= scale;
    }
    if let Some((clip, offset)) = noise {
        if clip.sample_rate != m.sample_rate {
            return Err(Error::Shape("noise clip rate mismatch".into()));
        }
        if offset + m.len() > clip.len() {
            return Err(Error::InvalidArg(format!(
                "noise clip too short: need {} + {} samples, have {}",
                offset,
                m.len(),
                clip.len()
            )));
        }
        for (v, n) in out.samples.iter_mut().zip(&clip.samples[offset..]) {
            *v += n;
        }
    }
    Ok(out)
}

/// Gradient of `apply_transform` w.r.t. the baseband: the additive noise
/// drops out and what remains is the correlation with the response taps,
/// scaled like the forward pass.
pub fn transform_pullback(
    grad_out: &[f64],
    resp: &ChannelResponse,
    d_m: f64,
    p: &TransformParams,
) -> Result<Vec<f64>> {
    let scale = attenuation_scale(resp, d_m, p)?.powi(p.attenuation_power as i32);
    // correlation via convolution with the reversed taps
    let rev: Vec<f64> = resp.taps.iter().rev().copied().collect();
    let full = convolve_full(grad_out, &rev);
    let lead = resp.taps.len() - 1;
    Ok((0..grad_out.len())
        .map(|k| scale * full.get(lead + k).copied().unwrap_or(0.0))
        .collect())
}

/// Draw one (response, noise clip) index pair, uniformly and independently —
/// response first, then noise, so seeded sequences are reproducible.
pub fn sample_pair<R: Rng>(set: &TransformSet, rng: &mut R) -> Result<(usize, usize)> {
    if set.responses.is_empty() || set.noise.clips.is_empty() {
        return Err(Error::Prerequisite(
            "transform set must hold at least one response and one noise clip".into(),
        ));
    }
    let r = rng.gen_range(0..set.responses.len());
    let n = rng.gen_range(0..set.noise.clips.len());
    Ok((r, n))
}
