use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// Number of items kept by a fraction of `c`: `⌈fraction·c⌉`, with a small
/// guard so that e.g. `0.07 · 100` yields 7 rather than 8.
pub fn fraction_count(fraction: f64, c: usize) -> Result<usize> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::config(format!("fraction {fraction} must lie in (0, 1]")));
    }
    let raw = fraction * c as f64;
    Ok(((raw - 1e-9).ceil().max(0.0) as usize).clamp(usize::from(c > 0), c))
}

/// Indices ordered by descending score, ties by ascending index.
pub fn rank_by_score(scores: &[f64]) -> Result<Vec<usize>> {
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::Numeric(format!("score {i} is NaN")));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    Ok(idx)
}

/// The `⌈fraction·c⌉` highest-scoring concepts.
pub fn top_fraction(scores: &[f64], fraction: f64) -> Result<BTreeSet<usize>> {
    let m = fraction_count(fraction, scores.len())?;
    Ok(rank_by_score(scores)?.into_iter().take(m).collect())
}

/// `|a ∩ b| / |a ∪ b|`, defined as 1 for two empty sets.
pub fn jaccard(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// `(r, share of total energy held by the top r concepts)` for r = 1..=c.
pub fn cumulative_energy_curve(energy: &[f64]) -> Result<Vec<(usize, f64)>> {
    if energy.iter().any(|e| !e.is_finite() || *e < 0.0) {
        return Err(Error::Numeric("energy must be finite and nonnegative".into()));
    }
    let total: f64 = energy.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::Numeric("total energy is zero; curve is undefined".into()));
    }
    let mut sorted = energy.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut curve: Vec<(usize, f64)> = sorted
        .iter()
        .enumerate()
        .map(|(r, e)| {
            acc += e;
            (r + 1, acc / total)
        })
        .collect();
    // Summation order differs from `total`; pin the endpoint.
    if let Some(last) = curve.last_mut() {
        last.1 = 1.0;
    }
    Ok(curve)
}
