//! Least-squares extraction of coherence parameters from P₃ scans.

mod lm;
mod spectrum;
mod visibility;

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

pub use lm::{levenberg_marquardt, LmOptions, LmOutcome, Problem};
pub use spectrum::{estimate_fringe_frequency, FringeEstimate};
pub use visibility::{
    fit_visibility_decay, peak_to_peak_visibility, visibility_band, VisibilityBand, VisibilityModelKind, VisibilityPoint,
};

use crate::dephasing::{chirp_phase, envelope_with_t2, exact_envelope, LineshapeForm};
use crate::error::{Error, Result};
use crate::shots::DataSet;
use crate::trap::T2_STAR_PER_K;

/// Functional form behind a [`FitResult`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FitModel {
    /// `offset + A·α(t)·cos(ωt + φ [+ c·χ(t)])`.
    Ramsey {
        form: LineshapeForm,
        chirp: f64,
    },
    /// `offset − A·α(s)·cos(ωs + φ [+ c·χ(s)])`, `s = t − t_c`.
    Echo {
        form: LineshapeForm,
        chirp: f64,
    },
    Visibility(VisibilityModelKind),
}

impl FitModel {
    pub fn parameter_names(&self) -> Vec<&'static str> {
        match self {
            FitModel::Ramsey { .. } => vec!["amplitude", "offset", "T2_star", "fringe_frequency", "phase"],
            FitModel::Echo { .. } => vec!["amplitude", "offset", "T2_star", "fringe_frequency", "phase", "echo_center"],
            FitModel::Visibility(VisibilityModelKind::GaussianSigma) => vec!["V0", "sigma"],
            FitModel::Visibility(VisibilityModelKind::AllanCurve { .. }) => vec!["V0", "allan_scale"],
        }
    }

    pub fn eval(&self, p: &[f64], x: f64) -> f64 {
        match self {
            FitModel::Ramsey { form, chirp } => p[1] + p[0] * fringe(*form, *chirp, p[2], p[3], p[4], x),
            FitModel::Echo { form, chirp } => p[1] - p[0] * fringe(*form, *chirp, p[2], p[3], p[4], x - p[5]),
            FitModel::Visibility(kind) => kind.eval(p, x),
        }
    }
}

/// `α(s)·cos(ωs + φ + c·χ(s))` for either lineshape.
fn fringe(form: LineshapeForm, chirp: f64, t2: f64, omega: f64, phase: f64, s: f64) -> f64 {
    let t2 = t2.abs();
    match form {
        LineshapeForm::Unchirped => envelope_with_t2(s.abs(), t2) * (omega * s + phase).cos(),
        LineshapeForm::Exact => {
            let k = t2 / T2_STAR_PER_K;
            exact_envelope(s, k) * (omega * s + phase + chirp * chirp_phase(s, k)).cos()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: FitModel,
    pub names: Vec<String>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub residual_norm: f64,
    pub chi2_reduced: f64,
    /// False means the parameters are unreliable.
    pub converged: bool,
    pub iterations: usize,
    pub optimality: f64,
    /// Echo visibility `A/(offset − background)` with its error.
    pub visibility: Option<(f64, f64)>,
    /// 1/e time of a visibility decay, s.
    pub decay_time: Option<f64>,
    /// T₂* from the other lineshape form, for comparison.
    pub alternate_t2_star: Option<f64>,
}

impl FitResult {
    fn from_outcome(model: FitModel, out: LmOutcome) -> Self {
        let names = model.parameter_names().into_iter().map(String::from).collect();
        let mut values = out.params;
        if matches!(model, FitModel::Ramsey { .. } | FitModel::Echo { .. }) {
            values[2] = values[2].abs();
            // canonical sign: positive amplitude, phase in (−π, π]
            if values[0] < 0.0 {
                values[0] = -values[0];
                values[4] += PI;
            }
            values[4] = wrap(values[4]);
        }
        FitResult {
            model,
            names,
            values,
            stderr: out.stderr,
            residual_norm: out.residual_norm,
            chi2_reduced: out.chi2_reduced,
            converged: out.converged,
            iterations: out.iterations,
            optimality: out.optimality,
            visibility: None,
            decay_time: None,
            alternate_t2_star: None,
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }

    pub fn error_of(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.stderr[i])
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.model.eval(&self.values, x)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fit result serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse { line: e.line(), reason: e.to_string() })
    }

    /// One-line parameter summary.
    pub fn summary(&self) -> String {
        let mut parts: Vec<String> =
            self.names.iter().zip(self.values.iter().zip(&self.stderr)).map(|(n, (v, e))| format!("{n}={v:.6e}±{e:.2e}")).collect();
        if let Some((v, e)) = self.visibility {
            parts.push(format!("visibility={v:.4}±{e:.4}"));
        }
        if let Some(t) = self.decay_time {
            parts.push(format!("decay_time={t:.6e}"));
        }
        if !self.converged {
            parts.push("UNCONVERGED".into());
        }
        parts.join(" ")
    }
}

fn wrap(phase: f64) -> f64 {
    let p = phase.rem_euclid(2.0 * PI);
    if p > PI {
        p - 2.0 * PI
    } else {
        p
    }
}

/// Weights `1/σ²`; non-positive errors fall back to the smallest positive
/// one (or unit weights when none is positive).
fn weights(data: &DataSet) -> Vec<f64> {
    let floor = data.points.iter().map(|p| p.p3_stderr).filter(|s| *s > 0.0).fold(f64::INFINITY, f64::min);
    data.points
        .iter()
        .map(|p| {
            let s = if p.p3_stderr > 0.0 { p.p3_stderr } else { floor };
            if s.is_finite() {
                1.0 / (s * s)
            } else {
                1.0
            }
        })
        .collect()
}

fn check_grid(data: &DataSet) -> Result<()> {
    if data.points.len() < 8 {
        return Err(Error::validation("data", format!("need at least 8 points, got {}", data.points.len())));
    }
    if data.points.windows(2).any(|w| w[1].x <= w[0].x) {
        return Err(Error::validation("data", "x must be strictly increasing"));
    }
    if data.points.iter().any(|p| !p.x.is_finite() || !p.p3_mean.is_finite()) {
        return Err(Error::validation("data", "non-finite values"));
    }
    Ok(())
}

/// Runs LM from every start and keeps the lowest residual. Parameters
/// with a `Some` entry in `fixed` are held at that value.
fn best_of(model: &FitModel, data: &DataSet, starts: &[Vec<f64>], fixed: &[Option<f64>]) -> LmOutcome {
    let (x, y, w) = (data.xs(), data.ys(), weights(data));
    let free: Vec<usize> = (0..fixed.len()).filter(|&k| fixed[k].is_none()).collect();
    let expand = |q: &[f64]| -> Vec<f64> {
        let mut full: Vec<f64> = fixed.iter().map(|f| f.unwrap_or(0.0)).collect();
        for (i, &k) in free.iter().enumerate() {
            full[k] = q[i];
        }
        full
    };
    let f = |q: &[f64], t: f64| model.eval(&expand(q), t);
    let problem = Problem { model: &f, x: &x, y: &y, weights: &w };
    let opts = LmOptions::default();
    let mut best: Option<LmOutcome> = None;
    for s in starts {
        let q0: Vec<f64> = free.iter().map(|&k| s[k]).collect();
        let out = levenberg_marquardt(&problem, &q0, &opts);
        let better = match &best {
            None => true,
            Some(b) => out.residual_norm < b.residual_norm * (1.0 - 1e-12),
        };
        if (better && out.residual_norm.is_finite()) || best.is_none() {
            best = Some(out);
        }
    }
    let mut out = best.expect("at least one start");
    let mut stderr = vec![0.0; fixed.len()];
    for (i, &k) in free.iter().enumerate() {
        stderr[k] = out.stderr[i];
    }
    out.params = expand(&out.params);
    out.stderr = stderr;
    out
}

const PHASE_STARTS: [f64; 4] = [0.0, FRAC_PI_2, PI, 3.0 * FRAC_PI_2];

fn chirp_signs(form: LineshapeForm) -> &'static [f64] {
    match form {
        LineshapeForm::Unchirped => &[0.0],
        LineshapeForm::Exact => &[1.0, -1.0],
    }
}

/// Fits `P₃(t) = offset + A·α(t)·cos(ω t + φ)`.
pub fn fit_ramsey(data: &DataSet, form: LineshapeForm) -> Result<FitResult> {
    let mut r = fit_ramsey_form(data, form)?;
    let other = match form {
        LineshapeForm::Unchirped => LineshapeForm::Exact,
        LineshapeForm::Exact => LineshapeForm::Unchirped,
    };
    r.alternate_t2_star = fit_ramsey_form(data, other).ok().filter(|o| o.converged).and_then(|o| o.get("T2_star"));
    Ok(r)
}

fn fit_ramsey_form(data: &DataSet, form: LineshapeForm) -> Result<FitResult> {
    check_grid(data)?;
    let (x, y) = (data.xs(), data.ys());
    let est = estimate_fringe_frequency(&x, &y)?;
    if est.zero {
        return Err(Error::Numeric("degenerate data: no fringe signal".into()));
    }
    let span = x[x.len() - 1] - x[0];
    let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, &v| (a.0.min(v), a.1.max(v)));
    let offset = y.iter().sum::<f64>() / y.len() as f64;
    let amp = 0.5 * (hi - lo);
    let mut best: Option<(FitModel, LmOutcome)> = None;
    for &c in chirp_signs(form) {
        let model = FitModel::Ramsey { form, chirp: c };
        let starts: Vec<Vec<f64>> =
            [span / 3.0, span].iter().flat_map(|&t2| PHASE_STARTS.iter().map(move |&ph| vec![amp, offset, t2, est.omega, ph])).collect();
        let out = best_of(&model, data, &starts, &[None; 5]);
        if best.as_ref().is_none_or(|b| out.residual_norm < b.1.residual_norm) {
            best = Some((model, out));
        }
    }
    let (model, out) = best.expect("chirp candidates");
    Ok(FitResult::from_outcome(model, out))
}

/// Options for [`fit_echo`]. Fixing the envelope width, fringe frequency
/// and centre (for instance from a high-visibility reference scan) keeps
/// the amplitude well defined when the echo has nearly vanished.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EchoFitOptions {
    /// P₃ floor from atoms that never take part in the coherent evolution.
    pub background: f64,
    pub t2_star: Option<f64>,
    pub fringe_frequency: Option<f64>,
    pub center: Option<f64>,
}

/// Fits the echo form `offset − A·α(t − t_c)·cos(ω(t − t_c) + φ)` with the
/// centre starting at `2τ_π`.
pub fn fit_echo(data: &DataSet, tau_pi: f64, form: LineshapeForm, opts: &EchoFitOptions) -> Result<FitResult> {
    check_grid(data)?;
    let (x, y) = (data.xs(), data.ys());
    let centre = 2.0 * tau_pi;
    if centre < x[0] || centre > x[x.len() - 1] {
        return Err(Error::validation("tau_pi", "scan does not cover t = 2τ_π"));
    }
    let est = estimate_fringe_frequency(&x, &y)?;
    let span = x[x.len() - 1] - x[0];
    let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, &v| (a.0.min(v), a.1.max(v)));
    let offset = y.iter().sum::<f64>() / y.len() as f64;
    let amp = 0.5 * (hi - lo);
    let omegas = match opts.fringe_frequency {
        Some(w) => vec![w],
        None if est.zero => vec![0.0],
        None => vec![est.omega, 0.0],
    };
    let t2s = match opts.t2_star {
        Some(t) => vec![t],
        None => vec![span / 4.0, span],
    };
    let fixed = [None, None, opts.t2_star, opts.fringe_frequency, None, opts.center];
    let mut best: Option<(FitModel, LmOutcome)> = None;
    for &c in chirp_signs(form) {
        let model = FitModel::Echo { form, chirp: c };
        let mut starts = Vec::new();
        for &w in &omegas {
            for &t2 in &t2s {
                for ph in PHASE_STARTS {
                    starts.push(vec![amp, offset, t2, w, ph, opts.center.unwrap_or(centre)]);
                }
            }
        }
        let out = best_of(&model, data, &starts, &fixed);
        if best.as_ref().is_none_or(|b| out.residual_norm < b.1.residual_norm) {
            best = Some((model, out));
        }
    }
    let (model, out) = best.expect("chirp candidates");
    let mut r = FitResult::from_outcome(model, out);
    let (a, o) = (r.values[0], r.values[1] - opts.background);
    if o > 0.0 {
        let (ea, eo) = (r.stderr[0], r.stderr[1]);
        let v = a / o;
        let rel = if a > 0.0 { (ea / a).powi(2) } else { 0.0 };
        r.visibility = Some((v, (ea / o).max(v * (rel + (eo / o).powi(2)).sqrt())));
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn synth(model: &FitModel, p: &[f64], x: &[f64]) -> DataSet {
        let y: Vec<f64> = x.iter().map(|&t| model.eval(p, t)).collect();
        DataSet::from_xy(x, &y, &vec![0.01; x.len()])
    }

    #[test]
    fn ramsey_noiseless_recovery() {
        let model = FitModel::Ramsey { form: LineshapeForm::Unchirped, chirp: 0.0 };
        let truth = [0.3, 0.31, 0.86e-3, TAU * 3.2e3, 0.4];
        let x: Vec<f64> = (0..60).map(|i| i as f64 * 40e-6).collect();
        let r = fit_ramsey(&synth(&model, &truth, &x), LineshapeForm::Unchirped).unwrap();
        assert!(r.converged);
        for (a, b) in r.values.iter().zip(truth) {
            assert!((a / b - 1.0).abs() < 1e-6, "{a} vs {b}");
        }
        assert!(r.alternate_t2_star.is_some());
    }

    #[test]
    fn exact_noiseless_recovery() {
        let model = FitModel::Ramsey { form: LineshapeForm::Exact, chirp: 1.0 };
        let truth = [0.3, 0.31, 0.86e-3, TAU * 3.2e3, -0.7];
        let x: Vec<f64> = (0..60).map(|i| i as f64 * 40e-6).collect();
        let r = fit_ramsey(&synth(&model, &truth, &x), LineshapeForm::Exact).unwrap();
        assert_eq!(r.model, model);
        for (a, b) in r.values.iter().zip(truth) {
            assert!((a / b - 1.0).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn echo_noiseless_recovery() {
        let model = FitModel::Echo { form: LineshapeForm::Unchirped, chirp: 0.0 };
        let truth = [0.29, 0.31, 0.86e-3, TAU * 2.5e3, 0.2, 8.0e-3];
        let x: Vec<f64> = (0..50).map(|i| 6.5e-3 + i as f64 * 60e-6).collect();
        let r = fit_echo(&synth(&model, &truth, &x), 4e-3, LineshapeForm::Unchirped, &EchoFitOptions::default()).unwrap();
        for (a, b) in r.values.iter().zip(truth) {
            assert!((a / b - 1.0).abs() < 1e-6, "{a} vs {b}");
        }
        let (v, _) = r.visibility.unwrap();
        assert!((v - 0.29 / 0.31).abs() < 1e-6);
        let opts =
            EchoFitOptions { t2_star: Some(truth[2]), fringe_frequency: Some(truth[3]), center: Some(truth[5]), ..Default::default() };
        let held = fit_echo(&synth(&model, &truth, &x), 4e-3, LineshapeForm::Unchirped, &opts).unwrap();
        assert!((held.values[0] / truth[0] - 1.0).abs() < 1e-6);
        assert_eq!(held.stderr[2], 0.0);
    }

    #[test]
    fn refit_is_idempotent() {
        let model = FitModel::Ramsey { form: LineshapeForm::Unchirped, chirp: 0.0 };
        let x: Vec<f64> = (0..40).map(|i| i as f64 * 50e-6).collect();
        let noisy: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, &t)| model.eval(&[0.3, 0.3, 0.9e-3, TAU * 2e3, 0.1], t) + 0.01 * ((i * 37 % 11) as f64 / 5.0 - 1.0))
            .collect();
        let first = fit_ramsey(&DataSet::from_xy(&x, &noisy, &vec![0.01; 40]), LineshapeForm::Unchirped).unwrap();
        let again = fit_ramsey(&synth(&first.model, &first.values, &x), LineshapeForm::Unchirped).unwrap();
        for (a, b) in again.values.iter().zip(&first.values) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "{a} vs {b}");
        }
        // first-order optimality at the noisy optimum
        assert!(first.optimality < 1e-4, "{}", first.optimality);
    }

    #[test]
    fn degenerate_inputs() {
        let x: Vec<f64> = (0..10).map(|i| i as f64 * 1e-4).collect();
        let flat = DataSet::from_xy(&x, &[0.3; 10], &[0.01; 10]);
        assert!(matches!(fit_ramsey(&flat, LineshapeForm::Unchirped), Err(Error::Numeric(_))));
        let short = DataSet::from_xy(&x[..5], &[0.3; 5], &[0.01; 5]);
        assert!(matches!(fit_ramsey(&short, LineshapeForm::Unchirped), Err(Error::Validation { .. })));
    }

    #[test]
    fn json_round_trip() {
        let model = FitModel::Ramsey { form: LineshapeForm::Unchirped, chirp: 0.0 };
        let x: Vec<f64> = (0..30).map(|i| i as f64 * 50e-6).collect();
        let r = fit_ramsey(&synth(&model, &[0.3, 0.3, 0.9e-3, TAU * 2e3, 0.1], &x), LineshapeForm::Unchirped).unwrap();
        let back = FitResult::from_json(&r.to_json()).unwrap();
        assert_eq!(back.values, r.values);
        assert!(r.summary().contains("T2_star="));
    }
}
