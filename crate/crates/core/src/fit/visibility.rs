//! Echo-visibility decay fits.

use serde::{Deserialize, Serialize};

use super::{levenberg_marquardt, FitModel, FitResult, LmOptions, Problem};
use crate::allan::{echo_visibility, AllanSource, VisibilityModel};
use crate::error::{Error, Result};
use crate::shots::DataSet;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisibilityPoint {
    pub tau_pi: f64,
    pub visibility: f64,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum VisibilityModelKind {
    /// `V₀·exp(−½ τ² σ²)` with constant σ.
    GaussianSigma,
    /// `V₀·exp(−s² σ̃_A(τ)² δ₀² τ²)` with a fitted scale `s`.
    AllanCurve { allan: AllanSource, delta0: f64 },
}

impl VisibilityModelKind {
    pub fn eval(&self, p: &[f64], tau: f64) -> f64 {
        match self {
            VisibilityModelKind::GaussianSigma => p[0] * (-0.5 * tau * tau * p[1] * p[1]).exp(),
            VisibilityModelKind::AllanCurve { allan, delta0 } => match allan.sigma_a(tau) {
                Ok(s) => p[0] * (-(p[1] * s * delta0 * tau).powi(2)).exp(),
                Err(_) => f64::NAN,
            },
        }
    }
}

/// Fits `V₀` and σ (or the Allan scale) to visibilities measured at
/// several `τ_π`.
pub fn fit_visibility_decay(points: &[VisibilityPoint], kind: VisibilityModelKind) -> Result<FitResult> {
    if points.len() < 4 {
        return Err(Error::validation("points", format!("need at least 4, got {}", points.len())));
    }
    let x: Vec<f64> = points.iter().map(|p| p.tau_pi).collect();
    let y: Vec<f64> = points.iter().map(|p| p.visibility).collect();
    let floor = points.iter().map(|p| p.error).filter(|e| *e > 0.0).fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = points
        .iter()
        .map(|p| {
            let e = if p.error > 0.0 { p.error } else { floor };
            if e.is_finite() {
                1.0 / (e * e)
            } else {
                1.0
            }
        })
        .collect();
    let v0 = y.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(1e-6);
    let start_sigma = {
        let guesses: Vec<f64> = points
            .iter()
            .filter(|p| p.tau_pi > 0.0 && p.visibility > 0.0 && p.visibility < v0)
            .map(|p| (2.0 * (v0 / p.visibility).ln()).sqrt() / p.tau_pi)
            .collect();
        if guesses.is_empty() {
            1.0 / x.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE)
        } else {
            guesses.iter().sum::<f64>() / guesses.len() as f64
        }
    };
    let start = match &kind {
        VisibilityModelKind::GaussianSigma => vec![v0, start_sigma],
        VisibilityModelKind::AllanCurve { .. } => vec![v0, 1.0],
    };
    let model = FitModel::Visibility(kind.clone());
    let f = |p: &[f64], t: f64| model.eval(p, t);
    let out = levenberg_marquardt(&Problem { model: &f, x: &x, y: &y, weights: &w }, &start, &LmOptions::default());
    if out.params.iter().any(|p| !p.is_finite()) {
        return Err(Error::Numeric("visibility fit diverged".into()));
    }
    let mut r = FitResult::from_outcome(model, out);
    r.values[1] = r.values[1].abs();
    r.decay_time = decay_time(&kind, r.values[1], &x);
    Ok(r)
}

/// τ at which the visibility has fallen to `V₀/e`.
fn decay_time(kind: &VisibilityModelKind, p1: f64, taus: &[f64]) -> Option<f64> {
    match kind {
        VisibilityModelKind::GaussianSigma => (p1 > 0.0).then(|| std::f64::consts::SQRT_2 / p1),
        VisibilityModelKind::AllanCurve { allan, delta0 } => {
            let g = |t: f64| allan.sigma_a(t).map(|s| (p1 * s * delta0 * t).powi(2) - 1.0);
            let (mut lo, mut hi) = match allan {
                AllanSource::Curve(c) => (c.taus[0], *c.taus.last()?),
                AllanSource::PowerLaw { .. } => {
                    let m = taus.iter().copied().fold(0.0, f64::max);
                    (m * 1e-4, m * 1e4)
                }
            };
            if g(lo).ok()? > 0.0 || g(hi).ok()? < 0.0 {
                return None;
            }
            for _ in 0..200 {
                let mid = (lo * hi).sqrt();
                if g(mid).ok()? < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Some((lo * hi).sqrt())
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisibilityBand {
    pub taus: Vec<f64>,
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
}

/// Predicted visibilities for a best-case and a worst-case Allan curve.
pub fn visibility_band(best: &AllanSource, worst: &AllanSource, delta0: f64, v0: f64, taus: &[f64]) -> Result<VisibilityBand> {
    let b = VisibilityModel::new(delta0, v0, best.clone());
    let w = VisibilityModel::new(delta0, v0, worst.clone());
    let mut upper = Vec::with_capacity(taus.len());
    let mut lower = Vec::with_capacity(taus.len());
    for &t in taus {
        let (vb, vw) = (echo_visibility(t, &b)?, echo_visibility(t, &w)?);
        upper.push(vb.max(vw));
        lower.push(vb.min(vw));
    }
    Ok(VisibilityBand { taus: taus.to_vec(), upper, lower })
}

/// `(max − min)/(max + min − 2·background)` of a scan.
pub fn peak_to_peak_visibility(data: &DataSet, background: f64) -> Result<f64> {
    if data.points.is_empty() {
        return Err(Error::validation("data", "empty scan"));
    }
    let (lo, hi) = data.points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.p3_mean), a.1.max(p.p3_mean)));
    let denom = hi + lo - 2.0 * background;
    if denom <= 0.0 {
        return Err(Error::Numeric("scan carries no signal above background".into()));
    }
    Ok((hi - lo) / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allan::AllanCurve;

    fn curve(scale: f64) -> AllanSource {
        let taus: Vec<f64> = (0..20).map(|i| 1e-3 * 1.5f64.powi(i)).collect();
        let sig: Vec<f64> = taus.iter().map(|t| scale * 0.004 * (t / 0.1f64).powf(0.25)).collect();
        AllanSource::Curve(AllanCurve::new(taus, sig).unwrap())
    }

    #[test]
    fn gaussian_exact_recovery() {
        let kind = VisibilityModelKind::GaussianSigma;
        let pts: Vec<VisibilityPoint> = (1..9)
            .map(|i| {
                let t = i as f64 * 10e-3;
                VisibilityPoint { tau_pi: t, visibility: kind.eval(&[0.95, 30.0], t), error: 0.02 }
            })
            .collect();
        let r = fit_visibility_decay(&pts, kind).unwrap();
        assert!((r.values[0] - 0.95).abs() < 1e-8 && (r.values[1] - 30.0).abs() < 1e-6);
        assert!((r.decay_time.unwrap() - 2f64.sqrt() / 30.0).abs() < 1e-9);
    }

    #[test]
    fn allan_scale_recovery() {
        let delta0 = -2.0 * std::f64::consts::PI * 3e3;
        let kind = VisibilityModelKind::AllanCurve { allan: curve(1.0), delta0 };
        let pts: Vec<VisibilityPoint> = (1..10)
            .map(|i| {
                let t = i as f64 * 4e-3;
                VisibilityPoint { tau_pi: t, visibility: kind.eval(&[0.9, 1.7], t), error: 0.02 }
            })
            .collect();
        let r = fit_visibility_decay(&pts, kind.clone()).unwrap();
        assert!((r.values[1] - 1.7).abs() < 1e-6, "{}", r.values[1]);
        let td = r.decay_time.unwrap();
        assert!((kind.eval(&r.values, td) / 0.9 - (-1.0f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn band_brackets_intermediate_curve() {
        let delta0 = -2.0 * std::f64::consts::PI * 3e3;
        let taus: Vec<f64> = (1..30).map(|i| i as f64 * 2e-3).collect();
        let band = visibility_band(&curve(0.5), &curve(2.0), delta0, 0.95, &taus).unwrap();
        let mid = VisibilityModel::new(delta0, 0.95, curve(1.1));
        for (i, &t) in taus.iter().enumerate() {
            let v = echo_visibility(t, &mid).unwrap();
            assert!(band.lower[i] <= v && v <= band.upper[i]);
        }
    }

    #[test]
    fn peak_to_peak() {
        let d = DataSet::from_xy(&[0.0, 1.0, 2.0], &[0.1, 0.5, 0.3], &[0.0; 3]);
        assert!((peak_to_peak_visibility(&d, 0.0).unwrap() - 0.4 / 0.6).abs() < 1e-12);
        assert!(fit_visibility_decay(&[], VisibilityModelKind::GaussianSigma).is_err());
    }
}
