//! Gaussian kernel density estimate of modality scores on `[0, 1]`.

use crate::error::{Error, Result};

/// Used when Silverman's rule collapses (a single score, or all scores equal).
pub const FALLBACK_BANDWIDTH: f64 = 0.05;

/// Silverman's rule of thumb: `0.9 · min(σ, IQR/1.34) · n^(-1/5)`.
pub fn silverman_bandwidth(scores: &[f64]) -> f64 {
    let n = scores.len();
    if n < 2 {
        return FALLBACK_BANDWIDTH;
    }
    let mean = scores.iter().sum::<f64>() / n as f64;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let spread = match (sd > 0.0, iqr > 0.0) {
        (true, true) => sd.min(iqr / 1.34),
        (true, false) => sd,
        _ => return FALLBACK_BANDWIDTH,
    };
    0.9 * spread * (n as f64).powf(-0.2)
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Density on `grid` evenly spaced points spanning `[-3h, 1 + 3h]`, so that
/// nearly all kernel mass of scores in `[0, 1]` lies on the grid.
pub fn modality_density_export(scores: &[f64], bandwidth: Option<f64>, grid: usize) -> Result<Vec<(f64, f64)>> {
    if scores.is_empty() {
        return Err(Error::config("density export needs at least one active score"));
    }
    if grid < 2 {
        return Err(Error::config("density grid needs at least two points"));
    }
    let h = bandwidth.unwrap_or_else(|| silverman_bandwidth(scores));
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::config(format!("bandwidth {h} must be positive")));
    }
    let (lo, hi) = (-3.0 * h, 1.0 + 3.0 * h);
    let step = (hi - lo) / (grid - 1) as f64;
    let norm = 1.0 / (scores.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    Ok((0..grid)
        .map(|g| {
            let x = lo + g as f64 * step;
            let density = scores
                .iter()
                .map(|s| {
                    let u = (x - s) / h;
                    (-0.5 * u * u).exp()
                })
                .sum::<f64>()
                * norm;
            (x, density)
        })
        .collect())
}
