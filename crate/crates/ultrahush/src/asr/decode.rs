//! Greedy CTC decoding and character error rate.

use super::model::LogitsMatrix;
use super::{index_token, BLANK, NUM_TOKENS};

/// Best-path decode: per-frame argmax, collapse adjacent repeats, drop
/// blanks.
pub fn greedy_decode(logits: &LogitsMatrix) -> String {
    let mut out = String::new();
    let mut prev = usize::MAX;
    for t in 0..logits.frames {
        let row = logits.row(t);
        let mut best = 0;
        for k in 1..NUM_TOKENS {
            if row[k] > row[best] {
                best = k;
            }
        }
        if best != prev && best != BLANK {
            out.push(index_token(best).unwrap());
        }
        prev = best;
    }
    out
}

fn levenshtein(a: &[char], b: &[char]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Character error rate: edit distance divided by reference length.
///
/// Degenerate conventions: an empty reference with an empty hypothesis is
/// 0.0; an empty reference with a non-empty hypothesis returns the raw
/// hypothesis length (the rate is undefined, so the insertion count stands
/// in for it).
pub fn cer(reference: &str, hypothesis: &str) -> f64 {
    let r: Vec<char> = reference.chars().collect();
    let h: Vec<char> = hypothesis.chars().collect();
    if r.is_empty() {
        return h.len() as f64;
    }
    levenshtein(&r, &h) as f64 / r.len() as f64
}
