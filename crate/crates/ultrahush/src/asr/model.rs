//! Acoustic model: a context-window MLP over log-mel frames emitting
//! per-frame log-probabilities for the 29 output tokens.

use super::features::{Spectrogram, NUM_MELS};
use super::NUM_TOKENS;
use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Frames of log-mel context stacked on each side of the centre frame.
pub const CONTEXT: usize = 5;
pub const IN_DIM: usize = NUM_MELS * (2 * CONTEXT + 1);
pub const HIDDEN: usize = 256;

// Fixed affine input normalization: log-mel values live roughly in
// [ln(1e-8), 6], so this maps them near [-2, 2.3]. Constant (not
// data-dependent) to keep runs reproducible and gradients trivial.
const FEAT_MEAN: f64 = -8.0;
const FEAT_STD: f64 = 6.0;

/// Frames × tokens log-probabilities, row-major; every row sums to one in
/// probability space.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitsMatrix {
    pub frames: usize,
    pub data: Vec<f64>,
}

impl LogitsMatrix {
    pub fn row(&self, frame: usize) -> &[f64] {
        &self.data[frame * NUM_TOKENS..(frame + 1) * NUM_TOKENS]
    }
}

/// Weights are stored input-major (in × out), biases per output unit.
#[derive(Debug, Clone, PartialEq)]
pub struct AcousticModel {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub w3: Vec<f64>,
    pub b3: Vec<f64>,
    pub seed: u64,
    pub epochs_trained: u32,
}

/// Per-tensor gradients in the same layout as the model.
#[derive(Debug, Clone)]
pub(crate) struct ParamGrads {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub w3: Vec<f64>,
    pub b3: Vec<f64>,
}

impl ParamGrads {
    pub fn zeros() -> Self {
        ParamGrads {
            w1: vec![0.0; IN_DIM * HIDDEN],
            b1: vec![0.0; HIDDEN],
            w2: vec![0.0; HIDDEN * HIDDEN],
            b2: vec![0.0; HIDDEN],
            w3: vec![0.0; HIDDEN * NUM_TOKENS],
            b3: vec![0.0; NUM_TOKENS],
        }
    }
}

/// Activations kept from a forward pass for the backward passes.
pub(crate) struct ForwardCache {
    pub frames: usize,
    pub x: Vec<f64>,  // frames × IN_DIM stacked context
    pub h1: Vec<f64>, // frames × HIDDEN, post-ReLU
    pub h2: Vec<f64>, // frames × HIDDEN, post-ReLU
}

/// C[m×n] (+)= A[m×k]·B[k×n], all row-major.
fn gemm(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], beta: f64, c: &mut [f64]) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0, a.as_ptr(), k as isize, 1, b.as_ptr(), n as isize, 1, beta,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// C[m×n] (+)= A[m×k]·B[n×k]ᵀ — B given row-major n×k.
fn gemm_bt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], beta: f64, c: &mut [f64]) {
    debug_assert!(a.len() >= m * k && b.len() >= n * k && c.len() >= m * n);
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0, a.as_ptr(), k as isize, 1, b.as_ptr(), 1, k as isize, beta,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// C[m×n] (+)= A[k×m]ᵀ·B[k×n] — A given row-major k×m.
fn gemm_at(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], beta: f64, c: &mut [f64]) {
    debug_assert!(a.len() >= k * m && b.len() >= k * n && c.len() >= m * n);
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0, a.as_ptr(), 1, m as isize, b.as_ptr(), n as isize, 1, beta,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

impl AcousticModel {
    /// He-initialised hidden layers, Xavier output layer.
    pub fn new_random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize, std: f64| -> Vec<f64> {
            let dist = Normal::new(0.0, std).unwrap();
            (0..n).map(|_| dist.sample(&mut rng)).collect()
        };
        AcousticModel {
            w1: draw(IN_DIM * HIDDEN, (2.0 / IN_DIM as f64).sqrt()),
            b1: vec![0.0; HIDDEN],
            w2: draw(HIDDEN * HIDDEN, (2.0 / HIDDEN as f64).sqrt()),
            b2: vec![0.0; HIDDEN],
            w3: draw(HIDDEN * NUM_TOKENS, (1.0 / HIDDEN as f64).sqrt()),
            b3: vec![0.0; NUM_TOKENS],
            seed,
            epochs_trained: 0,
        }
    }

    pub fn zeroed() -> Self {
        AcousticModel {
            w1: vec![0.0; IN_DIM * HIDDEN],
            b1: vec![0.0; HIDDEN],
            w2: vec![0.0; HIDDEN * HIDDEN],
            b2: vec![0.0; HIDDEN],
            w3: vec![0.0; HIDDEN * NUM_TOKENS],
            b3: vec![0.0; NUM_TOKENS],
            seed: 0,
            epochs_trained: 0,
        }
    }

    /// Stack ±CONTEXT neighbour frames into the frames × IN_DIM input
    /// matrix, normalized; edges pad with the silence feature value.
    fn stack_context(feats: &Spectrogram) -> Vec<f64> {
        let t_max = feats.frames;
        let pad = ((1e-8f64).ln() - FEAT_MEAN) / FEAT_STD;
        let mut x = vec![pad; t_max * IN_DIM];
        for t in 0..t_max {
            for (slot, off) in (-(CONTEXT as isize)..=CONTEXT as isize).enumerate() {
                let src = t as isize + off;
                if src < 0 || src >= t_max as isize {
                    continue;
                }
                let dst = t * IN_DIM + slot * NUM_MELS;
                for (o, v) in x[dst..dst + NUM_MELS].iter_mut().zip(feats.row(src as usize)) {
                    *o = (v - FEAT_MEAN) / FEAT_STD;
                }
            }
        }
        x
    }

    pub(crate) fn forward_cached(&self, feats: &Spectrogram) -> Result<(LogitsMatrix, ForwardCache)> {
        if feats.mels != NUM_MELS {
            return Err(Error::Shape(format!("model expects {NUM_MELS} mels, got {}", feats.mels)));
        }
        if feats.frames == 0 {
            return Err(Error::Shape("no frames to score".into()));
        }
        let t = feats.frames;
        let x = Self::stack_context(feats);

        let mut h1 = vec![0.0; t * HIDDEN];
        gemm(t, IN_DIM, HIDDEN, &x, &self.w1, 0.0, &mut h1);
        for row in h1.chunks_mut(HIDDEN) {
            for (v, b) in row.iter_mut().zip(&self.b1) {
                *v = (*v + b).max(0.0);
            }
        }

        let mut h2 = vec![0.0; t * HIDDEN];
        gemm(t, HIDDEN, HIDDEN, &h1, &self.w2, 0.0, &mut h2);
        for row in h2.chunks_mut(HIDDEN) {
            for (v, b) in row.iter_mut().zip(&self.b2) {
                *v = (*v + b).max(0.0);
            }
        }

        let mut u = vec![0.0; t * NUM_TOKENS];
        gemm(t, HIDDEN, NUM_TOKENS, &h2, &self.w3, 0.0, &mut u);
        for row in u.chunks_mut(NUM_TOKENS) {
            let mut mx = f64::NEG_INFINITY;
            for (v, b) in row.iter_mut().zip(&self.b3) {
                *v += b;
                mx = mx.max(*v);
            }
            let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
            for v in row.iter_mut() {
                *v -= lse;
            }
        }

        let logits = LogitsMatrix { frames: t, data: u };
        Ok((logits, ForwardCache { frames: t, x, h1, h2 }))
    }

    pub fn forward(&self, feats: &Spectrogram) -> Result<LogitsMatrix> {
        Ok(self.forward_cached(feats)?.0)
    }

    /// Backward through the MLP given the loss gradient w.r.t. the
    /// pre-softmax outputs. Parameter gradients and the gradient over the
    /// stacked input matrix are each optional so callers only pay for what
    /// they use.
    pub(crate) fn backward(
        &self,
        cache: &ForwardCache,
        du: &[f64],
        want_params: bool,
        want_input: bool,
    ) -> (Option<ParamGrads>, Option<Vec<f64>>) {
        let t = cache.frames;
        debug_assert_eq!(du.len(), t * NUM_TOKENS);
        let mut g = want_params.then(ParamGrads::zeros);

        if let Some(g) = g.as_mut() {
            for row in du.chunks(NUM_TOKENS) {
                for (gb, d) in g.b3.iter_mut().zip(row) {
                    *gb += d;
                }
            }
            gemm_at(HIDDEN, t, NUM_TOKENS, &cache.h2, du, 0.0, &mut g.w3);
        }

        let mut dh2 = vec![0.0; t * HIDDEN];
        gemm_bt(t, NUM_TOKENS, HIDDEN, du, &self.w3, 0.0, &mut dh2);
        for (d, h) in dh2.iter_mut().zip(&cache.h2) {
            if *h <= 0.0 {
                *d = 0.0;
            }
        }
        if let Some(g) = g.as_mut() {
            for row in dh2.chunks(HIDDEN) {
                for (gb, d) in g.b2.iter_mut().zip(row) {
                    *gb += d;
                }
            }
            gemm_at(HIDDEN, t, HIDDEN, &cache.h1, &dh2, 0.0, &mut g.w2);
        }

        let mut dh1 = vec![0.0; t * HIDDEN];
        gemm_bt(t, HIDDEN, HIDDEN, &dh2, &self.w2, 0.0, &mut dh1);
        for (d, h) in dh1.iter_mut().zip(&cache.h1) {
            if *h <= 0.0 {
                *d = 0.0;
            }
        }
        if let Some(g) = g.as_mut() {
            for row in dh1.chunks(HIDDEN) {
                for (gb, d) in g.b1.iter_mut().zip(row) {
                    *gb += d;
                }
            }
            gemm_at(IN_DIM, t, HIDDEN, &cache.x, &dh1, 0.0, &mut g.w1);
        }

        let dx = want_input.then(|| {
            let mut dx = vec![0.0; t * IN_DIM];
            gemm_bt(t, HIDDEN, IN_DIM, &dh1, &self.w1, 0.0, &mut dx);
            dx
        });
        (g, dx)
    }

    /// Fold a stacked-input gradient back onto the per-frame features
    /// (adjoint of `stack_context`, including the normalization scale).
    pub(crate) fn unstack_context(dx: &[f64], frames: usize) -> Spectrogram {
        let mut g = Spectrogram::zeros(frames, NUM_MELS);
        for t in 0..frames {
            for (slot, off) in (-(CONTEXT as isize)..=CONTEXT as isize).enumerate() {
                let src = t as isize + off;
                if src < 0 || src >= frames as isize {
                    continue;
                }
                let from = t * IN_DIM + slot * NUM_MELS;
                let to = src as usize * NUM_MELS;
                for m in 0..NUM_MELS {
                    g.data[to + m] += dx[from + m] / FEAT_STD;
                }
            }
        }
        g
    }
}
