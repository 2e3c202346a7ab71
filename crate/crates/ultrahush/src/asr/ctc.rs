//! CTC loss in log space with an exact gradient with respect to the
//! pre-softmax logits, plus a brute-force path-enumeration reference for
//! small problems.

use super::model::LogitsMatrix;
use super::{BLANK, NUM_TOKENS};

#[derive(Debug, Clone)]
pub struct CtcResult {
    /// Negative log-probability of the target labelling; +inf when the
    /// target cannot be emitted in the given number of frames.
    pub loss: f64,
    /// d loss / d u for pre-softmax logits u, frames × tokens row-major.
    /// All zeros when infeasible.
    pub grad: Vec<f64>,
    pub feasible: bool,
}

fn logaddexp2(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn logaddexp3(a: f64, b: f64, c: f64) -> f64 {
    let m = a.max(b).max(c);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + ((a - m).exp() + (b - m).exp() + (c - m).exp()).ln()
}

/// Shortest frame count that can emit `target`: one frame per label plus a
/// separating blank between equal neighbours.
fn min_frames(target: &[usize]) -> usize {
    target.len() + target.windows(2).filter(|w| w[0] == w[1]).count()
}

/// Blank-interleaved label sequence φ t₁ φ t₂ … φ.
fn extend(target: &[usize]) -> Vec<usize> {
    let mut ext = Vec::with_capacity(2 * target.len() + 1);
    ext.push(BLANK);
    for &y in target {
        ext.push(y);
        ext.push(BLANK);
    }
    ext
}

/// CTC forward-backward. `logits` are per-frame log-probabilities; `target`
/// is the label sequence without blanks (tokens in 1..NUM_TOKENS).
pub fn ctc_loss(logits: &LogitsMatrix, target: &[usize]) -> CtcResult {
    assert!(
        target.iter().all(|&y| y != BLANK && y < NUM_TOKENS),
        "target tokens must be non-blank and in range"
    );
    let t_max = logits.frames;
    if t_max < min_frames(target).max(1) {
        return CtcResult { loss: f64::INFINITY, grad: vec![0.0; t_max * NUM_TOKENS], feasible: false };
    }
    // -inf log-probabilities are legal (underflowed softmax), NaN never is. The
    // max-based guards in logaddexp would quietly absorb NaN into -inf and
    // misreport a poisoned forward pass as an unreachable target, so surface it
    // as a NaN loss instead and let the caller abort.
    if logits.data.iter().any(|x| x.is_nan()) {
        return CtcResult { loss: f64::NAN, grad: vec![0.0; t_max * NUM_TOKENS], feasible: true };
    }

    let ext = extend(target);
    let s_max = ext.len();
    let lp = |t: usize, k: usize| logits.data[t * NUM_TOKENS + k];
    let skip_ok = |s: usize| s >= 2 && ext[s] != BLANK && ext[s] != ext[s - 2];

    let mut alpha = vec![f64::NEG_INFINITY; t_max * s_max];
    alpha[0] = lp(0, ext[0]);
    if s_max > 1 {
        alpha[1] = lp(0, ext[1]);
    }
    for t in 1..t_max {
        for s in 0..s_max {
            let stay = alpha[(t - 1) * s_max + s];
            let step = if s >= 1 { alpha[(t - 1) * s_max + s - 1] } else { f64::NEG_INFINITY };
            let skip = if skip_ok(s) { alpha[(t - 1) * s_max + s - 2] } else { f64::NEG_INFINITY };
            alpha[t * s_max + s] = lp(t, ext[s]) + logaddexp3(stay, step, skip);
        }
    }
    let tail2 = if s_max > 1 { alpha[(t_max - 1) * s_max + s_max - 2] } else { f64::NEG_INFINITY };
    let log_p = logaddexp2(alpha[(t_max - 1) * s_max + s_max - 1], tail2);
    if log_p == f64::NEG_INFINITY {
        return CtcResult { loss: f64::INFINITY, grad: vec![0.0; t_max * NUM_TOKENS], feasible: false };
    }

    let mut beta = vec![f64::NEG_INFINITY; t_max * s_max];
    beta[(t_max - 1) * s_max + s_max - 1] = lp(t_max - 1, ext[s_max - 1]);
    if s_max > 1 {
        beta[(t_max - 1) * s_max + s_max - 2] = lp(t_max - 1, ext[s_max - 2]);
    }
    for t in (0..t_max - 1).rev() {
        for s in 0..s_max {
            let stay = beta[(t + 1) * s_max + s];
            let step = if s + 1 < s_max { beta[(t + 1) * s_max + s + 1] } else { f64::NEG_INFINITY };
            let skip = if s + 2 < s_max && skip_ok(s + 2) {
                beta[(t + 1) * s_max + s + 2]
            } else {
                f64::NEG_INFINITY
            };
            beta[t * s_max + s] = lp(t, ext[s]) + logaddexp3(stay, step, skip);
        }
    }

    // dL/du_tk = p_t(k) − (1/P) Σ_{s: ext[s]=k} α_t(s)β_t(s)/p_t(k); both α
    // and β include the frame-t emission, hence the division.
    let mut grad = vec![0.0; t_max * NUM_TOKENS];
    for t in 0..t_max {
        let mut occ = [f64::NEG_INFINITY; NUM_TOKENS];
        for s in 0..s_max {
            let ab = alpha[t * s_max + s] + beta[t * s_max + s];
            occ[ext[s]] = logaddexp2(occ[ext[s]], ab);
        }
        for k in 0..NUM_TOKENS {
            let p = lp(t, k).exp();
            let gamma =
                if occ[k] == f64::NEG_INFINITY { 0.0 } else { (occ[k] - lp(t, k) - log_p).exp() };
            grad[t * NUM_TOKENS + k] = p - gamma;
        }
    }

    CtcResult { loss: -log_p, grad, feasible: true }
}

/// Reference CTC loss by enumerating every frame-level path whose collapse
/// equals the target. Paths are restricted to the tokens that can appear
/// (target labels and blank), which leaves the sum unchanged. Only viable
/// for a handful of frames.
pub fn ctc_loss_brute_force(logits: &LogitsMatrix, target: &[usize]) -> f64 {
    let mut alphabet: Vec<usize> = vec![BLANK];
    for &y in target {
        if !alphabet.contains(&y) {
            alphabet.push(y);
        }
    }
    let t_max = logits.frames;
    let n = alphabet.len();
    assert!(n.pow(t_max as u32) <= 1 << 20, "path enumeration too large");

    let mut matches: Vec<f64> = Vec::new();
    let mut digits = vec![0usize; t_max];
    loop {
        let path: Vec<usize> = digits.iter().map(|&d| alphabet[d]).collect();
        let mut collapsed = Vec::new();
        let mut prev = usize::MAX;
        for &k in &path {
            if k != prev && k != BLANK {
                collapsed.push(k);
            }
            prev = k;
        }
        if collapsed == target {
            matches.push((0..t_max).map(|t| logits.data[t * NUM_TOKENS + path[t]]).sum());
        }
        let mut i = 0;
        loop {
            if i == t_max {
                let total = if matches.is_empty() {
                    f64::NEG_INFINITY
                } else {
                    let m = matches.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    m + matches.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
                };
                return -total;
            }
            digits[i] += 1;
            if digits[i] < n {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
    }
}
