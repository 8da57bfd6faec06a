//! Thermal light-shift distribution and the closed-form dephasing lineshapes.
//!
//! A 3D Maxwell–Boltzmann ensemble has energies `E ~ Gamma(3/2, k_B T)`. In
//! the harmonic approximation the light shift is linear in `E`, so
//! `x = |δ_ls − δ₀| ~ Gamma(3/2, 1/K)`. Its characteristic function is
//! `(1 − i t/K)^(−3/2)`, which gives the Ramsey envelope
//! `(1 + (t/K)²)^(−3/4)` together with a chirp phase `(3/2)·atan(t/K)`.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_non_negative, ensure_positive, Error, Result};
use crate::trap::{lightshift_unchecked, DerivedTrapParams, T2_STAR_PER_K};

/// Coefficient in the rounded envelope `[1 + 2.79 (t/T₂*)²]^(−3/4)`.
pub const ENVELOPE_COEFF: f64 = 2.79;

/// Which lineshape to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LineshapeForm {
    /// Rounded envelope, no chirp phase.
    #[default]
    #[serde(alias = "paper")]
    Unchirped,
    /// Full ensemble average including the chirp phase.
    Exact,
}

impl std::str::FromStr for LineshapeForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unchirped" | "paper" => Ok(LineshapeForm::Unchirped),
            "exact" => Ok(LineshapeForm::Exact),
            other => Err(Error::validation("form", format!("expected `unchirped` or `exact`, got `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LightShiftDistribution {
    pub delta0: f64,
    /// Time constant K, s.
    pub k_time: f64,
    /// +1 when shifts move up from δ₀ with energy (red-detuned trap), −1
    /// otherwise.
    pub direction: f64,
}

impl LightShiftDistribution {
    pub fn new(delta0: f64, k_time: f64) -> Self {
        LightShiftDistribution { delta0, k_time, direction: if delta0 > 0.0 { -1.0 } else { 1.0 } }
    }

    pub fn from_params(p: &DerivedTrapParams) -> Self {
        let mut d = Self::new(p.delta0, p.k_time);
        // sign of the energy term is −η
        d.direction = if p.eta > 0.0 { -1.0 } else { 1.0 };
        d
    }

    pub fn t2_star(&self) -> f64 {
        T2_STAR_PER_K * self.k_time
    }

    pub fn mean(&self) -> f64 {
        self.delta0 + self.direction * 1.5 / self.k_time
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    /// K; zero puts every atom at the bottom of its well.
    pub temperature: f64,
    pub k_b: f64,
    /// Optional cut-off energy (J); atoms above are rejected.
    pub truncation_energy: Option<f64>,
}

impl EnsembleSpec {
    pub fn new(temperature: f64, k_b: f64) -> Self {
        EnsembleSpec { temperature, k_b, truncation_energy: None }
    }

    pub fn truncated_at(mut self, energy: f64) -> Self {
        self.truncation_energy = Some(energy);
        self
    }

    /// Fraction of the untruncated distribution below the cut-off.
    pub fn acceptance(&self) -> f64 {
        match self.truncation_energy {
            None => 1.0,
            Some(_) if self.temperature == 0.0 => 1.0,
            Some(e) => gamma_3_2_cdf(e / (self.k_b * self.temperature)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_non_negative("ensemble.temperature", self.temperature)?;
        ensure_positive("ensemble.k_b", self.k_b)?;
        if let Some(e) = self.truncation_energy {
            ensure_positive("ensemble.truncation_energy", e)?;
        }
        Ok(())
    }
}

/// Regularised lower incomplete gamma function P(3/2, x).
pub fn gamma_3_2_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    erf(x.sqrt()) - 2.0 * (x / std::f64::consts::PI).sqrt() * (-x).exp()
}

/// Error function: Maclaurin series below 3, continued fraction for erfc
/// above.
pub fn erf(x: f64) -> f64 {
    if x < 0.0 {
        return -erf(-x);
    }
    if x < 3.0 {
        // Maclaurin series, converges quickly below 3
        let mut term = x;
        let mut sum = x;
        let x2 = x * x;
        let mut n = 0.0;
        loop {
            n += 1.0;
            term *= -x2 / n;
            let add = term / (2.0 * n + 1.0);
            sum += add;
            if add.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        sum * 2.0 / std::f64::consts::PI.sqrt()
    } else {
        // asymptotic continued fraction for erfc
        let mut f = 0.0;
        for k in (1..60).rev() {
            f = (k as f64 / 2.0) / (x + f);
        }
        1.0 - (-x * x).exp() / std::f64::consts::PI.sqrt() / (x + f)
    }
}

pub fn lightshift_pdf(delta_ls: f64, dist: &LightShiftDistribution) -> f64 {
    let x = dist.direction * (delta_ls - dist.delta0);
    if x < 0.0 || !dist.k_time.is_finite() {
        return 0.0;
    }
    let k = dist.k_time;
    2.0 * k.powf(1.5) / std::f64::consts::PI.sqrt() * x.sqrt() * (-k * x).exp()
}

pub fn sample_energy<R: Rng + ?Sized>(spec: &EnsembleSpec, rng: &mut R) -> Result<f64> {
    spec.validate()?;
    if spec.temperature == 0.0 {
        return Ok(0.0);
    }
    let acceptance = spec.acceptance();
    if acceptance < 0.01 {
        return Err(Error::validation(
            "ensemble.truncation_energy",
            format!("accepts only {:.3e} of the thermal distribution", acceptance),
        ));
    }
    let gamma = Gamma::new(1.5, spec.k_b * spec.temperature).map_err(|e| Error::Numeric(format!("gamma distribution: {e}")))?;
    loop {
        let e = gamma.sample(rng);
        match spec.truncation_energy {
            Some(cut) if e >= cut => continue,
            _ => return Ok(e),
        }
    }
}

/// Draws an energy from `spec` and maps it to a light shift.
pub fn sample_lightshift<R: Rng + ?Sized>(spec: &EnsembleSpec, params: &DerivedTrapParams, rng: &mut R) -> Result<f64> {
    Ok(lightshift_unchecked(sample_energy(spec, rng)?, params))
}

/// Draws directly from the light-shift distribution (untruncated).
pub fn sample_from_distribution<R: Rng + ?Sized>(dist: &LightShiftDistribution, rng: &mut R) -> Result<f64> {
    if !dist.k_time.is_finite() {
        return Ok(dist.delta0);
    }
    ensure_positive("distribution.k_time", dist.k_time)?;
    let gamma = Gamma::new(1.5, 1.0 / dist.k_time).map_err(|e| Error::Numeric(format!("gamma distribution: {e}")))?;
    Ok(dist.delta0 + dist.direction * gamma.sample(rng))
}

/// Rounded Ramsey envelope `[1 + 2.79 (t/T₂*)²]^(−3/4)`.
pub fn ramsey_envelope(t: f64, dist: &LightShiftDistribution) -> f64 {
    envelope_with_t2(t, dist.t2_star())
}

pub fn envelope_with_t2(t: f64, t2_star: f64) -> f64 {
    if !t2_star.is_finite() {
        return 1.0;
    }
    let r = t / t2_star;
    (1.0 + ENVELOPE_COEFF * r * r).powf(-0.75)
}

/// `|⟨exp(i δ_ls t)⟩| = (1 + (t/K)²)^(−3/4)`.
pub fn exact_envelope(t: f64, k_time: f64) -> f64 {
    if !k_time.is_finite() {
        return 1.0;
    }
    let r = t / k_time;
    (1.0 + r * r).powf(-0.75)
}

/// Phase of the characteristic function, `(3/2)·atan(t/K)`.
pub fn chirp_phase(t: f64, k_time: f64) -> f64 {
    if !k_time.is_finite() {
        return 0.0;
    }
    1.5 * (t / k_time).atan()
}

/// Ensemble-averaged `w` after a Ramsey sequence of length `t`.
pub fn ramsey_signal(t: f64, detuning: f64, dist: &LightShiftDistribution, form: LineshapeForm) -> Result<f64> {
    ensure_non_negative("t", t)?;
    Ok(inhomogeneous_cosine(t, detuning, dist, form))
}

/// Ensemble-averaged `w` of an echo read out at `t`, π pulse at `tau_pi`.
pub fn echo_signal(t: f64, tau_pi: f64, detuning: f64, dist: &LightShiftDistribution, form: LineshapeForm) -> Result<f64> {
    ensure_non_negative("tau_pi", tau_pi)?;
    if t < tau_pi {
        return Err(Error::validation("t", format!("echo is defined for t >= tau_pi ({t} < {tau_pi})")));
    }
    Ok(-inhomogeneous_cosine(t - 2.0 * tau_pi, detuning, dist, form))
}

/// `⟨cos((δ + δ_ls) s)⟩` for signed `s`.
fn inhomogeneous_cosine(s: f64, detuning: f64, dist: &LightShiftDistribution, form: LineshapeForm) -> f64 {
    let carrier = (detuning + dist.delta0) * s;
    match form {
        LineshapeForm::Unchirped => ramsey_envelope(s.abs(), dist) * carrier.cos(),
        LineshapeForm::Exact => exact_envelope(s, dist.k_time) * (carrier + dist.direction * chirp_phase(s, dist.k_time)).cos(),
    }
}

/// `⟨exp(i x t)⟩` for `x = |δ_ls − δ₀|`, optionally with the energy
/// distribution cut at `x_max` (in rad/s). Returns `(re, im)`.
///
/// The truncated case is integrated numerically after substituting `x = y²`.
pub fn characteristic_function(t: f64, k_time: f64, x_max: Option<f64>) -> (f64, f64) {
    match x_max {
        None => {
            let r = t / k_time;
            let mag = (1.0 + r * r).powf(-0.75);
            let ph = 1.5 * r.atan();
            (mag * ph.cos(), mag * ph.sin())
        }
        Some(x_max) => {
            let y_max = x_max.sqrt();
            let panels = 400 + (t * x_max / 2.0).ceil() as usize;
            let h = y_max / panels as f64;
            let (mut re, mut im, mut norm) = (0.0, 0.0, 0.0);
            for k in 0..panels {
                for (xi, wi) in GL5 {
                    let y = (k as f64 + 0.5 + 0.5 * xi) * h;
                    let x = y * y;
                    let weight = wi * 0.5 * h * y * y * (-k_time * x).exp();
                    norm += weight;
                    re += weight * (x * t).cos();
                    im += weight * (x * t).sin();
                }
            }
            (re / norm, im / norm)
        }
    }
}

const GL5: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];
