//! Fringe-frequency initializer.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FringeEstimate {
    /// Dominant angular frequency, rad/s. Zero when flagged.
    pub omega: f64,
    /// Set when the data carry no oscillation (constant or empty spectrum).
    pub zero: bool,
}

/// Peak of `|Σ (y − ȳ) e^{−iωt}|²` over a grid oversampled 8× relative to
/// the natural resolution `2π/span`, up to the Nyquist limit of the
/// median spacing. Works for uniform and non-uniform grids alike.
pub fn estimate_fringe_frequency(x: &[f64], y: &[f64]) -> Result<FringeEstimate> {
    if x.len() != y.len() {
        return Err(Error::validation("data", "x and y differ in length"));
    }
    if x.len() < 8 {
        return Err(Error::validation("data", format!("need at least 8 points, got {}", x.len())));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let dy: Vec<f64> = y.iter().map(|v| v - mean).collect();
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    if dy.iter().all(|d| d.abs() <= 1e-12 * scale) {
        return Ok(FringeEstimate { omega: 0.0, zero: true });
    }
    let span = x[x.len() - 1] - x[0];
    let mut gaps: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.sort_by(f64::total_cmp);
    let median = gaps[gaps.len() / 2];
    if span <= 0.0 || median <= 0.0 {
        return Err(Error::validation("data", "grid must be strictly increasing"));
    }
    let nyquist = TAU / (2.0 * median);
    let step = TAU / span / 8.0;
    let n = (nyquist / step).floor() as usize;
    let power = |w: f64| {
        let (mut c, mut s) = (0.0, 0.0);
        for (&t, &d) in x.iter().zip(&dy) {
            let (sn, cs) = (w * (t - x[0])).sin_cos();
            c += d * cs;
            s += d * sn;
        }
        c * c + s * s
    };
    // skip the lowest bins, which hold slow drifts and the decay envelope
    let (mut best, mut best_p) = (0.0, -1.0);
    for k in 4..=n {
        let w = k as f64 * step;
        let p = power(w);
        if p > best_p {
            best_p = p;
            best = w;
        }
    }
    if best_p <= 0.0 {
        return Ok(FringeEstimate { omega: 0.0, zero: true });
    }
    Ok(FringeEstimate { omega: best, zero: false })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_cosine_within_a_bin() {
        let x: Vec<f64> = (0..64).map(|i| i as f64 * 1e-4).collect();
        let w = TAU * 1234.0;
        let y: Vec<f64> = x.iter().map(|t| 0.5 + 0.3 * (w * t + 0.4).cos()).collect();
        let est = estimate_fringe_frequency(&x, &y).unwrap();
        let bin = TAU / (x[63] - x[0]);
        assert!(!est.zero);
        assert!((est.omega - w).abs() < bin, "{} vs {w}", est.omega);
    }

    #[test]
    fn nonuniform_grid() {
        let x: Vec<f64> = (0..80).map(|i| (i as f64 + 0.3 * ((i * 7) % 5) as f64) * 1e-4).collect();
        let w = TAU * 900.0;
        let y: Vec<f64> = x.iter().map(|t| (w * t).cos()).collect();
        let est = estimate_fringe_frequency(&x, &y).unwrap();
        assert!((est.omega - w).abs() < TAU / (x[79] - x[0]));
    }

    #[test]
    fn constant_flagged() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let est = estimate_fringe_frequency(&x, &[0.4; 10]).unwrap();
        assert!(est.zero && est.omega == 0.0);
        assert!(estimate_fringe_frequency(&x[..5], &[0.4; 5]).is_err());
    }
}
