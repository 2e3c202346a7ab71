//! Filtering: Butterworth biquad cascades (causal or zero-phase) and
//! linear-phase windowed-sinc FIRs. Defenses default to zero-phase IIR for
//! sharp cutoffs; differentiable attack paths use the FIR realization so the
//! gradient is a plain correlation.

use super::Waveform;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FilterKind {
    LowPass(f64),
    HighPass(f64),
    BandPass(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FirRealization {
    ButterworthZeroPhase,
    ButterworthCausal,
    WindowedSincFir,
}

#[derive(Debug, Clone, Copy)]
pub struct FilterSpec {
    pub kind: FilterKind,
    pub order: usize,
    pub realization: FirRealization,
}

impl FilterSpec {
    pub fn band_pass(lo: f64, hi: f64) -> Self {
        FilterSpec { kind: FilterKind::BandPass(lo, hi), order: 6, realization: FirRealization::ButterworthZeroPhase }
    }

    pub fn low_pass(hz: f64) -> Self {
        FilterSpec { kind: FilterKind::LowPass(hz), order: 6, realization: FirRealization::ButterworthZeroPhase }
    }

    pub fn high_pass(hz: f64) -> Self {
        FilterSpec { kind: FilterKind::HighPass(hz), order: 6, realization: FirRealization::ButterworthZeroPhase }
    }

    pub fn causal(mut self) -> Self {
        self.realization = FirRealization::ButterworthCausal;
        self
    }

    pub fn fir(mut self) -> Self {
        self.realization = FirRealization::WindowedSincFir;
        self
    }

    pub fn order(mut self, order: usize) -> Self {
        self.order = order;
        self
    }

    fn validate(&self, rate: u32) -> Result<()> {
        let nyq = rate as f64 / 2.0;
        let ok = match self.kind {
            FilterKind::LowPass(f) | FilterKind::HighPass(f) => f > 0.0 && f < nyq,
            FilterKind::BandPass(lo, hi) => lo > 0.0 && hi < nyq && lo < hi,
        };
        if !ok {
            return Err(Error::InvalidArg(format!(
                "filter cutoffs invalid for rate {rate}: {:?}",
                self.kind
            )));
        }
        if self.order == 0 {
            return Err(Error::InvalidArg("filter order must be positive".into()));
        }
        Ok(())
    }
}

/// One second-order section, direct form II transposed.
#[derive(Debug, Clone, Copy)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    pub fn process(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(x.len());
        let (mut z1, mut z2) = (0.0f64, 0.0f64);
        for &v in x {
            let y = self.b0 * v + z1;
            z1 = self.b1 * v - self.a1 * y + z2;
            z2 = self.b2 * v - self.a2 * y;
            out.push(y);
        }
        out
    }
}

/// Butterworth cascade section Q values for a given (even or odd) order.
/// Odd orders contribute one first-order section encoded as Q = 0.5.
fn butterworth_qs(order: usize) -> Vec<f64> {
    let n = order as f64;
    let pairs = order / 2;
    let mut qs = Vec::new();
    for k in 0..pairs {
        let phi = std::f64::consts::PI * (2.0 * k as f64 + 1.0) / (2.0 * n);
        qs.push(1.0 / (2.0 * phi.sin()));
    }
    if order % 2 == 1 {
        qs.push(0.5); // marker for the real pole
    }
    qs
}

fn lp_biquad(fc: f64, rate: f64, q: f64) -> Biquad {
    let w0 = 2.0 * std::f64::consts::PI * fc / rate;
    let (sw, cw) = (w0.sin(), w0.cos());
    let alpha = sw / (2.0 * q);
    let a0 = 1.0 + alpha;
    Biquad {
        b0: (1.0 - cw) / 2.0 / a0,
        b1: (1.0 - cw) / a0,
        b2: (1.0 - cw) / 2.0 / a0,
        a1: -2.0 * cw / a0,
        a2: (1.0 - alpha) / a0,
    }
}

fn hp_biquad(fc: f64, rate: f64, q: f64) -> Biquad {
    let w0 = 2.0 * std::f64::consts::PI * fc / rate;
    let (sw, cw) = (w0.sin(), w0.cos());
    let alpha = sw / (2.0 * q);
    let a0 = 1.0 + alpha;
    Biquad {
        b0: (1.0 + cw) / 2.0 / a0,
        b1: -(1.0 + cw) / a0,
        b2: (1.0 + cw) / 2.0 / a0,
        a1: -2.0 * cw / a0,
        a2: (1.0 - alpha) / a0,
    }
}

/// RBJ band-pass with constant 0 dB peak gain at the center frequency.
pub fn bp_biquad(fc: f64, rate: f64, q: f64) -> Biquad {
    let w0 = 2.0 * std::f64::consts::PI * fc / rate;
    let (sw, cw) = (w0.sin(), w0.cos());
    let alpha = sw / (2.0 * q);
    let a0 = 1.0 + alpha;
    Biquad {
        b0: alpha / a0,
        b1: 0.0,
        b2: -alpha / a0,
        a1: -2.0 * cw / a0,
        a2: (1.0 - alpha) / a0,
    }
}

fn first_order(fc: f64, rate: f64, highpass: bool) -> Biquad {
    // bilinear transform of 1/(s+1)
    let k = (std::f64::consts::PI * fc / rate).tan();
    let a0 = k + 1.0;
    if highpass {
        Biquad { b0: 1.0 / a0, b1: -1.0 / a0, b2: 0.0, a1: (k - 1.0) / a0, a2: 0.0 }
    } else {
        Biquad { b0: k / a0, b1: k / a0, b2: 0.0, a1: (k - 1.0) / a0, a2: 0.0 }
    }
}

/// Build the Butterworth cascade for a spec. Band-pass is realized as
/// high-pass(lo) followed by low-pass(hi), each of the stated order.
pub fn butterworth_sections(spec: &FilterSpec, rate: u32) -> Result<Vec<Biquad>> {
    spec.validate(rate)?;
    let r = rate as f64;
    let mut sections = Vec::new();
    let mut push_chain = |fc: f64, highpass: bool, order: usize| {
        for q in butterworth_qs(order) {
            if q == 0.5 && order % 2 == 1 {
                sections.push(first_order(fc, r, highpass));
            } else if highpass {
                sections.push(hp_biquad(fc, r, q));
            } else {
                sections.push(lp_biquad(fc, r, q));
            }
        }
    };
    match spec.kind {
        FilterKind::LowPass(f) => push_chain(f, false, spec.order),
        FilterKind::HighPass(f) => push_chain(f, true, spec.order),
        FilterKind::BandPass(lo, hi) => {
            push_chain(lo, true, spec.order);
            push_chain(hi, false, spec.order);
        }
    }
    Ok(sections)
}

fn run_cascade(sections: &[Biquad], x: &[f64]) -> Vec<f64> {
    let mut cur = x.to_vec();
    for s in sections {
        cur = s.process(&cur);
    }
    cur
}

/// Zero-phase forward-backward IIR with odd-reflection edge padding.
pub fn filtfilt(sections: &[Biquad], x: &[f64]) -> Vec<f64> {
    if x.is_empty() {
        return Vec::new();
    }
    let pad = (3 * 2 * sections.len() + 1).min(x.len().saturating_sub(1));
    let mut ext = Vec::with_capacity(x.len() + 2 * pad);
    for i in (1..=pad).rev() {
        ext.push(2.0 * x[0] - x[i]);
    }
    ext.extend_from_slice(x);
    for i in 1..=pad {
        ext.push(2.0 * x[x.len() - 1] - x[x.len() - 1 - i]);
    }
    let mut y = run_cascade(sections, &ext);
    y.reverse();
    y = run_cascade(sections, &y);
    y.reverse();
    y[pad..pad + x.len()].to_vec()
}

/// Linear-phase windowed-sinc FIR taps (Blackman window, odd tap count).
pub fn design_fir(kind: FilterKind, taps: usize, rate: u32) -> Result<Vec<f64>> {
    let spec = FilterSpec { kind, order: 1, realization: FirRealization::WindowedSincFir };
    spec.validate(rate)?;
    if taps % 2 == 0 {
        return Err(Error::InvalidArg("FIR tap count must be odd".into()));
    }
    let r = rate as f64;
    let m = (taps - 1) as f64 / 2.0;
    let lp = |fc: f64| -> Vec<f64> {
        let fcn = fc / r;
        (0..taps)
            .map(|i| {
                let d = i as f64 - m;
                let window = 0.42 - 0.5 * (std::f64::consts::PI * (d / m + 1.0)).cos()
                    + 0.08 * (2.0 * std::f64::consts::PI * (d / m + 1.0)).cos();
                2.0 * fcn * sinc_fn(2.0 * fcn * d) * window
            })
            .collect()
    };
    Ok(match kind {
        FilterKind::LowPass(f) => lp(f),
        FilterKind::HighPass(f) => {
            let mut h = lp(f);
            for v in h.iter_mut() {
                *v = -*v;
            }
            h[taps / 2] += 1.0;
            h
        }
        FilterKind::BandPass(lo, hi) => {
            let hhi = lp(hi);
            let hlo = lp(lo);
            hhi.iter().zip(&hlo).map(|(a, b)| a - b).collect()
        }
    })
}

fn sinc_fn(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Apply a symmetric FIR centered on each sample (zero phase, no group
/// delay): y[i] = Σ_j h[j]·x[i + j − M]. Out-of-range taps see zeros.
pub fn fir_centered(h: &[f64], x: &[f64]) -> Vec<f64> {
    let m = (h.len() / 2) as i64;
    let n = x.len() as i64;
    let mut y = vec![0.0; x.len()];
    for (i, o) in y.iter_mut().enumerate() {
        let mut acc = 0.0;
        let base = i as i64 - m;
        let j_lo = (-base).max(0) as usize;
        let j_hi = ((n - base).min(h.len() as i64)).max(0) as usize;
        for j in j_lo..j_hi {
            acc += h[j] * x[(base + j as i64) as usize];
        }
        *o = acc;
    }
    y
}

/// Exact adjoint of `fir_centered` for the same kernel and length.
pub fn fir_centered_adjoint(h: &[f64], grad_out: &[f64]) -> Vec<f64> {
    let m = (h.len() / 2) as i64;
    let n = grad_out.len() as i64;
    let mut gx = vec![0.0; grad_out.len()];
    for (i, &g) in grad_out.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let base = i as i64 - m;
        let j_lo = (-base).max(0) as usize;
        let j_hi = ((n - base).min(h.len() as i64)).max(0) as usize;
        for j in j_lo..j_hi {
            gx[(base + j as i64) as usize] += g * h[j];
        }
    }
    gx
}

/// Filter a waveform according to its spec's realization.
pub fn apply_filter(w: &Waveform, spec: &FilterSpec) -> Result<Waveform> {
    spec.validate(w.sample_rate)?;
    let samples = match spec.realization {
        FirRealization::ButterworthZeroPhase => {
            let sections = butterworth_sections(spec, w.sample_rate)?;
            filtfilt(&sections, &w.samples)
        }
        FirRealization::ButterworthCausal => {
            let sections = butterworth_sections(spec, w.sample_rate)?;
            run_cascade(&sections, &w.samples)
        }
        FirRealization::WindowedSincFir => {
            let taps = design_fir(spec.kind, 257, w.sample_rate)?;
            fir_centered(&taps, &w.samples)
        }
    };
    Ok(Waveform::new(samples, w.sample_rate))
}
