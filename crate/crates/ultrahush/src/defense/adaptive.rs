//! Differentiable defense surrogates for the crafting loop. Band-pass and
//! down-sampling are linear, so their adjoints are exact; quantization passes
//! gradients straight through. VAD deletes segments outright and cannot be
//! wrapped.

use super::{quantize, DefenseSpec};
use crate::error::{Error, Result};
use crate::signal::{
    design_fir, fir_centered, fir_centered_adjoint, resample, resample_adjoint, resample_out_len,
    FilterKind, Waveform,
};

const FIR_TAPS: usize = 257;

/// A defense inserted between mixing and featurization during optimization:
/// `apply` runs the defense, `pullback` maps loss gradients back through it.
#[derive(Debug, Clone)]
pub struct AdaptiveDefense {
    spec: DefenseSpec,
    rate: u32,
    /// Linear-phase kernel for the band-pass case.
    fir: Option<Vec<f64>>,
}

impl AdaptiveDefense {
    pub fn new(spec: &DefenseSpec, rate: u32) -> Result<Self> {
        spec.validate()?;
        let fir = match *spec {
            DefenseSpec::Vad { .. } => {
                return Err(Error::Unsupported(
                    "vad deletes segments; the time axis has no usable gradient".into(),
                ));
            }
            DefenseSpec::BandPass { low_hz, high_hz } => {
                Some(design_fir(FilterKind::BandPass(low_hz, high_hz), FIR_TAPS, rate)?)
            }
            DefenseSpec::Quantization { .. } | DefenseSpec::DownSample { .. } => None,
        };
        Ok(AdaptiveDefense { spec: *spec, rate, fir })
    }

    pub fn spec(&self) -> &DefenseSpec {
        &self.spec
    }

    fn reduced_rate(&self, factor: f64) -> u32 {
        (factor * self.rate as f64).round().max(1.0) as u32
    }

    pub fn apply(&self, w: &Waveform) -> Result<Waveform> {
        if w.sample_rate != self.rate {
            return Err(Error::Shape(format!(
                "defense built for {} Hz, input is {} Hz",
                self.rate, w.sample_rate
            )));
        }
        match self.spec {
            DefenseSpec::Quantization { bits } => quantize(w, bits),
            DefenseSpec::BandPass { .. } => {
                let h = self.fir.as_ref().expect("kernel built in new");
                Ok(Waveform::new(fir_centered(h, &w.samples), self.rate))
            }
            DefenseSpec::DownSample { factor } => {
                let down = resample(w, self.reduced_rate(factor))?;
                resample(&down, self.rate)
            }
            DefenseSpec::Vad { .. } => unreachable!("rejected in new"),
        }
    }

    /// Gradient of `apply` as a linear map: `grad_out` is d(loss)/d(output),
    /// the result is d(loss)/d(input) for an input of `in_len` samples.
    /// Quantization uses the straight-through convention (identity).
    pub fn pullback(&self, in_len: usize, grad_out: &[f64]) -> Vec<f64> {
        match self.spec {
            DefenseSpec::Quantization { .. } => grad_out.to_vec(),
            DefenseSpec::BandPass { .. } => {
                let h = self.fir.as_ref().expect("kernel built in new");
                fir_centered_adjoint(h, grad_out)
            }
            DefenseSpec::DownSample { factor } => {
                let reduced = self.reduced_rate(factor);
                let mid_len = resample_out_len(in_len, self.rate, reduced);
                let g_mid = resample_adjoint(grad_out, mid_len, reduced, self.rate);
                resample_adjoint(&g_mid, in_len, self.rate, reduced)
            }
            DefenseSpec::Vad { .. } => unreachable!("rejected in new"),
        }
    }
}
