//! Homogeneous dephasing from trap-depth fluctuations.
//!
//! Beat-signal records are reduced to an Allan deviation with the
//! non-overlapping two-sample estimator. The deviation at the π-pulse time
//! sets the spread of the shot-to-shot detuning change across an echo,
//! `σ(τ_π) = √2·|δ₀|·σ̃_A(τ_π)`, and thus the echo visibility.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_non_negative, ensure_positive, ensure_probability, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseRecord {
    pub sample_period: f64,
    /// Normalised beat amplitude, mean close to one.
    pub samples: Vec<f64>,
}

impl NoiseRecord {
    pub fn new(sample_period: f64, samples: Vec<f64>) -> Result<Self> {
        ensure_positive("sample_period", sample_period)?;
        if samples.len() < 2 {
            return Err(Error::validation("samples", "need at least two samples"));
        }
        for (i, &s) in samples.iter().enumerate() {
            ensure_finite(&format!("samples[{i}]"), s)?;
        }
        Ok(NoiseRecord { sample_period, samples })
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 * self.sample_period
    }

    /// Reads `time_s, amplitude` CSV with a header row. Times must be
    /// uniformly spaced.
    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines.next().ok_or(Error::Parse { line: 1, reason: "empty file".into() })??;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols != ["time_s", "amplitude"] {
            return Err(Error::Parse { line: 1, reason: format!("expected header `time_s, amplitude`, got `{header}`") });
        }
        let mut times = Vec::new();
        let mut samples = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let lineno = i + 2;
            let mut parts = line.split(',').map(str::trim);
            let mut next = |name: &str| -> Result<f64> {
                parts
                    .next()
                    .ok_or_else(|| Error::Parse { line: lineno, reason: format!("missing {name}") })?
                    .parse()
                    .map_err(|_| Error::Parse { line: lineno, reason: format!("bad {name}") })
            };
            times.push(next("time_s")?);
            samples.push(next("amplitude")?);
        }
        if times.len() < 2 {
            return Err(Error::validation("samples", "need at least two samples"));
        }
        let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
        for (k, w) in times.windows(2).enumerate() {
            if ((w[1] - w[0]) - dt).abs() > 1e-6 * dt {
                return Err(Error::Parse { line: k + 3, reason: "time samples are not uniformly spaced".into() });
            }
        }
        NoiseRecord::new(dt, samples)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "time_s,amplitude")?;
        for (i, s) in self.samples.iter().enumerate() {
            writeln!(w, "{:?},{:?}", i as f64 * self.sample_period, s)?;
        }
        Ok(())
    }
}

/// Number of samples per averaging window, if `tau` is commensurate.
fn samples_per_bin(record: &NoiseRecord, tau: f64) -> Result<usize> {
    ensure_positive("tau", tau)?;
    let ratio = tau / record.sample_period;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > 1e-6 * ratio.max(1.0) {
        return Err(Error::validation(
            "tau",
            format!("{tau} s is not an integer multiple of the sample period {} s", record.sample_period),
        ));
    }
    Ok(n as usize)
}

/// Non-overlapping Allan variance `(1/m) Σ (x̄ₖ₊₁ − x̄ₖ)²/2` over adjacent
/// bins of width `tau`.
pub fn allan_variance(record: &NoiseRecord, tau: f64) -> Result<f64> {
    let n = samples_per_bin(record, tau)?;
    let bins = record.samples.len() / n;
    if bins < 2 {
        return Err(Error::validation("tau", format!("record holds {bins} bin(s) of {tau} s, need 2")));
    }
    let means: Vec<f64> = record.samples.chunks_exact(n).map(|c| c.iter().sum::<f64>() / n as f64).collect();
    let m = means.len() - 1;
    let sum: f64 = means.windows(2).map(|w| (w[1] - w[0]).powi(2) / 2.0).sum();
    Ok(sum / m as f64)
}

pub fn allan_deviation(record: &NoiseRecord, tau: f64) -> Result<f64> {
    allan_variance(record, tau).map(f64::sqrt)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllanCurve {
    pub taus: Vec<f64>,
    pub sigma_a: Vec<f64>,
}

impl AllanCurve {
    pub fn new(taus: Vec<f64>, sigma_a: Vec<f64>) -> Result<Self> {
        if taus.is_empty() || taus.len() != sigma_a.len() {
            return Err(Error::validation("allan_curve", "taus and sigma_A must be non-empty and of equal length"));
        }
        if taus.windows(2).any(|w| w[1] <= w[0]) || taus[0] <= 0.0 {
            return Err(Error::validation("allan_curve.taus", "must be positive and strictly increasing"));
        }
        for s in &sigma_a {
            ensure_non_negative("allan_curve.sigma_A", *s)?;
        }
        Ok(AllanCurve { taus, sigma_a })
    }

    /// Allan deviation of `record` at each of `taus`.
    pub fn from_record(record: &NoiseRecord, taus: &[f64]) -> Result<Self> {
        let sigma = taus.iter().map(|&t| allan_deviation(record, t)).collect::<Result<Vec<_>>>()?;
        AllanCurve::new(taus.to_vec(), sigma)
    }

    /// Log-log linear interpolation; no extrapolation.
    pub fn interpolate(&self, tau: f64) -> Result<f64> {
        let (lo, hi) = (self.taus[0], *self.taus.last().unwrap());
        let tol = 1e-12 * hi;
        if !(tau >= lo - tol && tau <= hi + tol) {
            return Err(Error::validation("tau", format!("{tau} s lies outside the Allan curve range [{lo}, {hi}] s")));
        }
        let i = self.taus.partition_point(|&t| t < tau);
        if i == 0 {
            return Ok(self.sigma_a[0]);
        }
        if i == self.taus.len() {
            return Ok(*self.sigma_a.last().unwrap());
        }
        let (t0, t1) = (self.taus[i - 1], self.taus[i]);
        let (s0, s1) = (self.sigma_a[i - 1], self.sigma_a[i]);
        if s0 <= 0.0 || s1 <= 0.0 {
            let f = (tau - t0) / (t1 - t0);
            return Ok(s0 + f * (s1 - s0));
        }
        let f = (tau / t0).ln() / (t1 / t0).ln();
        Ok((s0.ln() + f * (s1 / s0).ln()).exp())
    }

    pub fn scaled(&self, factor: f64) -> AllanCurve {
        AllanCurve { taus: self.taus.clone(), sigma_a: self.sigma_a.iter().map(|s| s * factor).collect() }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "tau_s,sigma_A")?;
        for (t, s) in self.taus.iter().zip(&self.sigma_a) {
            writeln!(w, "{t:?},{s:?}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut taus = Vec::new();
        let mut sig = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if i == 0 {
                if line.split(',').map(str::trim).collect::<Vec<_>>() != ["tau_s", "sigma_A"] {
                    return Err(Error::Parse { line: 1, reason: "expected header `tau_s, sigma_A`".into() });
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').map(str::trim).collect();
            let parse = |s: Option<&&str>| -> Result<f64> {
                s.and_then(|v| v.parse().ok()).ok_or(Error::Parse { line: i + 1, reason: format!("bad row `{line}`") })
            };
            taus.push(parse(parts.first())?);
            sig.push(parse(parts.get(1))?);
        }
        AllanCurve::new(taus, sig)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    White,
    RandomWalk,
    /// First-order low-pass filtered white noise, corner at the reference τ.
    BandLimited,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    /// Target Allan deviation at `reference_tau`.
    pub target: f64,
    pub reference_tau: f64,
}

/// Generates a normalised beat record whose Allan deviation at the
/// reference τ equals the target.
pub fn synthesize_beat_record<R: Rng + ?Sized>(spec: &NoiseSpec, duration: f64, sample_period: f64, rng: &mut R) -> Result<NoiseRecord> {
    ensure_positive("sample_period", sample_period)?;
    ensure_positive("reference_tau", spec.reference_tau)?;
    ensure_non_negative("target", spec.target)?;
    if duration < 10.0 * spec.reference_tau {
        return Err(Error::validation("duration", "must be at least 10 reference averaging times"));
    }
    if spec.target >= 0.5 {
        return Err(Error::validation("target", "relative fluctuation must stay below 0.5 for a positive amplitude"));
    }
    let n = (duration / sample_period).round() as usize;
    if spec.target == 0.0 {
        return NoiseRecord::new(sample_period, vec![1.0; n]);
    }
    let noise: Vec<f64> = match spec.kind {
        NoiseKind::White => (0..n).map(|_| StandardNormal.sample(rng)).collect(),
        NoiseKind::RandomWalk => {
            let mut x = 0.0;
            let mut v: Vec<f64> = (0..n)
                .map(|_| {
                    x += {
                        let z: f64 = StandardNormal.sample(rng);
                        z
                    };
                    x
                })
                .collect();
            let mean = v.iter().sum::<f64>() / n as f64;
            v.iter_mut().for_each(|s| *s -= mean);
            v
        }
        NoiseKind::BandLimited => {
            let a = (-sample_period / spec.reference_tau).exp();
            let b = (1.0 - a * a).sqrt();
            let mut x: f64 = StandardNormal.sample(rng);
            (0..n)
                .map(|_| {
                    x = a * x
                        + b * {
                            let z: f64 = StandardNormal.sample(rng);
                            z
                        };
                    x
                })
                .collect()
        }
    };
    let unit = NoiseRecord::new(sample_period, noise.clone())?;
    let raw = allan_deviation(&unit, spec.reference_tau)?;
    if raw <= 0.0 {
        return Err(Error::Numeric("synthesised noise has zero Allan deviation".into()));
    }
    let scale = spec.target / raw;
    let samples: Vec<f64> = noise.iter().map(|x| 1.0 + scale * x).collect();
    let rms = (noise.iter().map(|x| x * x).sum::<f64>() / n as f64).sqrt() * scale;
    if rms >= 1.0 {
        return Err(Error::validation(
            "target",
            format!("unreachable for {:?} noise: per-sample fluctuation {rms:.2} exceeds the mean amplitude", spec.kind),
        ));
    }
    let record = NoiseRecord::new(sample_period, samples)?;
    let check = allan_deviation(&record, spec.reference_tau)?;
    if (check / spec.target - 1.0).abs() > 0.2 {
        return Err(Error::Numeric(format!("re-estimated deviation {check} misses target {}", spec.target)));
    }
    Ok(record)
}

/// Shot-to-shot change of the mean detuning across the π pulse.
pub fn sample_detuning_jump<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> Result<f64> {
    ensure_non_negative("sigma", sigma)?;
    if sigma == 0.0 {
        return Ok(0.0);
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Numeric(e.to_string()))?;
    Ok(normal.sample(rng))
}

/// Where σ̃_A(τ) comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AllanSource {
    Curve(AllanCurve),
    /// `σ̃_A(τ) = sigma_ref · (τ/tau_ref)^exponent`.
    PowerLaw {
        tau_ref: f64,
        sigma_ref: f64,
        exponent: f64,
    },
}

impl AllanSource {
    pub fn constant(sigma: f64) -> Self {
        AllanSource::PowerLaw { tau_ref: 1.0, sigma_ref: sigma, exponent: 0.0 }
    }

    pub fn sigma_a(&self, tau: f64) -> Result<f64> {
        match self {
            AllanSource::Curve(c) => c.interpolate(tau),
            AllanSource::PowerLaw { tau_ref, sigma_ref, exponent } => {
                if *exponent == 0.0 {
                    Ok(*sigma_ref)
                } else {
                    Ok(sigma_ref * (tau / tau_ref).powf(*exponent))
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisibilityModel {
    pub delta0: f64,
    pub v0: f64,
    pub allan: AllanSource,
    /// Multiplier on σ̃_A standing in for beam misalignment; 1 for aligned
    /// beams.
    pub misalignment: f64,
}

impl VisibilityModel {
    pub fn new(delta0: f64, v0: f64, allan: AllanSource) -> Self {
        VisibilityModel { delta0, v0, allan, misalignment: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("delta0", self.delta0)?;
        ensure_probability("V0", self.v0)?;
        ensure_non_negative("misalignment", self.misalignment)?;
        Ok(())
    }

    /// σ(τ_π) = √2·|δ₀|·σ̃_A(τ_π), rad/s.
    pub fn detuning_sigma(&self, tau_pi: f64) -> Result<f64> {
        if tau_pi == 0.0 {
            return Ok(0.0);
        }
        let s = self.misalignment * self.allan.sigma_a(tau_pi)?;
        Ok(std::f64::consts::SQRT_2 * self.delta0.abs() * s)
    }
}

/// `V₀ · exp(−σ̃_A(τ_π)² δ₀² τ_π²)`.
pub fn echo_visibility(tau_pi: f64, model: &VisibilityModel) -> Result<f64> {
    model.validate()?;
    ensure_non_negative("tau_pi", tau_pi)?;
    let sigma = model.detuning_sigma(tau_pi)?;
    Ok(model.v0 * (-0.5 * tau_pi * tau_pi * sigma * sigma).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn constant_record_has_zero_variance() {
        let r = NoiseRecord::new(1e-3, vec![1.0; 1000]).unwrap();
        for tau in [1e-3, 10e-3, 100e-3] {
            assert_eq!(allan_variance(&r, tau).unwrap(), 0.0);
        }
    }

    #[test]
    fn alternating_bins() {
        let x = 0.03;
        let per_bin = 5;
        let samples: Vec<f64> = (0..40).flat_map(|k| std::iter::repeat_n(if k % 2 == 0 { 1.0 + x } else { 1.0 - x }, per_bin)).collect();
        let r = NoiseRecord::new(2e-3, samples).unwrap();
        let v = allan_variance(&r, 10e-3).unwrap();
        assert!((v - 2.0 * x * x).abs() < 1e-15);
    }

    #[test]
    fn incommensurate_and_short_records_rejected() {
        let r = NoiseRecord::new(1e-3, vec![1.0; 10]).unwrap();
        assert!(allan_variance(&r, 1.5e-3).is_err());
        assert!(allan_variance(&r, 6e-3).is_err());
        assert!(allan_variance(&r, 5e-3).is_ok());
        assert!(NoiseRecord::new(1e-3, vec![1.0]).is_err());
        assert!(NoiseRecord::new(1e-3, vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn white_noise_scaling() {
        // ensemble over 1000 synthetic records: E[σ̃²(τ)] = s² · dt/τ
        let s = 0.01;
        let dt = 1e-3;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let normal = Normal::new(0.0, s).unwrap();
        let taus = [1e-3, 4e-3, 10e-3];
        let mut acc = [0.0; 3];
        let records = 1000;
        for _ in 0..records {
            let samples: Vec<f64> = (0..400).map(|_| 1.0 + normal.sample(&mut rng)).collect();
            let r = NoiseRecord::new(dt, samples).unwrap();
            for (a, &tau) in acc.iter_mut().zip(&taus) {
                *a += allan_variance(&r, tau).unwrap();
            }
        }
        for (a, &tau) in acc.iter().zip(&taus) {
            let expected = s * s * dt / tau;
            let got = a / records as f64;
            assert!((got / expected - 1.0).abs() < 0.1, "tau={tau}: {got} vs {expected}");
        }
    }

    #[test]
    fn synthesis_hits_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for kind in [NoiseKind::White, NoiseKind::RandomWalk, NoiseKind::BandLimited] {
            let spec = NoiseSpec { kind, target: 0.03, reference_tau: 0.1 };
            let r = synthesize_beat_record(&spec, 10.0, 1e-3, &mut rng).unwrap();
            let s = allan_deviation(&r, 0.1).unwrap();
            assert!((0.024..=0.036).contains(&s), "{kind:?}: {s}");
            let mean = r.samples.iter().sum::<f64>() / r.samples.len() as f64;
            assert!((mean - 1.0).abs() < 0.1);
        }
    }

    #[test]
    fn synthesis_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = NoiseSpec { kind: NoiseKind::White, target: 0.0, reference_tau: 0.1 };
        let r = synthesize_beat_record(&spec, 10.0, 1e-3, &mut rng).unwrap();
        assert!(r.samples.iter().all(|&s| s == 1.0));
        let spec = NoiseSpec { kind: NoiseKind::White, target: 0.03, reference_tau: 0.1 };
        assert!(synthesize_beat_record(&spec, 0.5, 1e-3, &mut rng).is_err());
        let spec = NoiseSpec { kind: NoiseKind::White, target: 0.6, reference_tau: 0.1 };
        assert!(synthesize_beat_record(&spec, 10.0, 1e-3, &mut rng).is_err());
    }

    #[test]
    fn white_synthesis_slope() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let spec = NoiseSpec { kind: NoiseKind::White, target: 0.01, reference_tau: 0.01 };
        let mut ratio = 0.0;
        let n = 50;
        for _ in 0..n {
            let r = synthesize_beat_record(&spec, 10.0, 1e-3, &mut rng).unwrap();
            ratio += allan_deviation(&r, 0.02).unwrap() / allan_deviation(&r, 0.01).unwrap();
        }
        ratio /= n as f64;
        assert!((ratio - 0.5f64.sqrt()).abs() < 0.02, "{ratio}");
    }

    #[test]
    fn curve_interpolation() {
        let c = AllanCurve::new(vec![1e-3, 1e-2, 1e-1], vec![1e-3, 1e-2, 1e-2]).unwrap();
        assert!((c.interpolate(10f64.powf(-2.5)).unwrap() - 10f64.powf(-2.5)).abs() < 1e-15);
        assert!((c.interpolate(0.05).unwrap() - 1e-2).abs() < 1e-15);
        assert!(c.interpolate(1e-4).is_err());
        assert!(c.interpolate(0.2).is_err());
        assert!(AllanCurve::new(vec![1.0, 1.0], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn csv_round_trips() {
        let r = NoiseRecord::new(1e-3, vec![1.0, 1.01, 0.99, 1.02]).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let back = NoiseRecord::read_csv(buf.as_slice()).unwrap();
        assert!((back.sample_period - 1e-3).abs() < 1e-15);
        assert_eq!(back.samples, r.samples);
        assert!(NoiseRecord::read_csv("t,a\n0,1\n".as_bytes()).is_err());
        assert!(NoiseRecord::read_csv("time_s,amplitude\n0,1\n0.001,1\n0.003,1\n".as_bytes()).is_err());

        let c = AllanCurve::new(vec![1e-3, 1e-2], vec![0.1, 0.05]).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("tau_s,sigma_A\n"));
        assert_eq!(AllanCurve::read_csv(buf.as_slice()).unwrap(), c);
    }

    #[test]
    fn jump_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert_eq!(sample_detuning_jump(0.0, &mut rng).unwrap(), 0.0);
        assert!(sample_detuning_jump(-1.0, &mut rng).is_err());
        let sigma = 37.0;
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| sample_detuning_jump(sigma, &mut rng).unwrap()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 4.0 * sigma / (n as f64).sqrt());
        // sd of the sample variance for a normal is σ²·√(2/(n−1))
        assert!((var - sigma * sigma).abs() < 4.0 * sigma * sigma * (2.0 / (n - 1) as f64).sqrt());
    }

    #[test]
    fn visibility_values() {
        let m = VisibilityModel::new(-2.0 * PI * 3000.0, 1.0, AllanSource::constant(0.01));
        assert_eq!(echo_visibility(0.0, &m).unwrap(), 1.0);
        let v = echo_visibility(0.01, &m).unwrap();
        let direct = (-(0.01f64.powi(2)) * (2.0 * PI * 3000.0f64).powi(2) * 0.01f64.powi(2)).exp();
        assert!((v - direct).abs() < 1e-15);
        assert!((v - 0.029).abs() < 0.001);
    }

    #[test]
    fn visibility_matches_jump_average() {
        let m = VisibilityModel::new(-2.0 * PI * 3000.0, 1.0, AllanSource::constant(0.01));
        let tau = 0.01;
        let sigma = m.detuning_sigma(tau).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 100_000;
        let vals: Vec<f64> = (0..n).map(|_| -(sample_detuning_jump(sigma, &mut rng).unwrap() * tau).cos()).collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        let v = echo_visibility(tau, &m).unwrap();
        assert!((mean + v).abs() < 4.0 * sd / (n as f64).sqrt(), "{mean} vs {v}");
    }

    #[test]
    fn outside_curve_refused() {
        let c = AllanCurve::new(vec![1e-3, 1.0], vec![0.001, 0.01]).unwrap();
        let m = VisibilityModel::new(-1000.0, 1.0, AllanSource::Curve(c));
        assert!(echo_visibility(2.0, &m).is_err());
        assert!(echo_visibility(0.0, &m).is_ok());
    }

    proptest::proptest! {
        #[test]
        fn visibility_monotone(s1 in 0.0f64..0.03, decay in 0.0f64..1.0, v0 in 0.0f64..1.0) {
            // non-increasing σ̃_A
            let c = AllanCurve::new(vec![1e-3, 1e-2, 1e-1, 1.0], vec![s1, s1 * (1.0 - 0.3 * decay), s1 * (1.0 - 0.6 * decay), s1 * (1.0 - 0.9 * decay)]).unwrap();
            let m = VisibilityModel::new(-1885.0, v0, AllanSource::Curve(c));
            let mut prev = v0;
            for k in 0..60 {
                let tau = 1e-3 * 10f64.powf(k as f64 / 20.0);
                let v = echo_visibility(tau, &m).unwrap();
                proptest::prop_assert!(v <= prev + 1e-15);
                prev = v;
            }
        }

        #[test]
        fn allan_scale_equivariant(c in 0.1f64..10.0, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let samples: Vec<f64> = (0..200).map(|_| 1.0 + 0.01 * { let z: f64 = StandardNormal.sample(&mut rng); z }).collect();
            let r = NoiseRecord::new(1e-3, samples.clone()).unwrap();
            let r2 = NoiseRecord::new(1e-3, samples.iter().map(|s| c * s).collect()).unwrap();
            let a = allan_deviation(&r, 5e-3).unwrap();
            let b = allan_deviation(&r2, 5e-3).unwrap();
            proptest::prop_assert!((b - c * a).abs() < 1e-12 * c * a.max(1e-12));
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(12))]
        #[test]
        fn jump_average_matches_gaussian_cf(sigma in 1.0f64..300.0, tau in 1e-3f64..0.05, seed in 0u64..100) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 100_000;
            let vals: Vec<f64> = (0..n).map(|_| -(sample_detuning_jump(sigma, &mut rng).unwrap() * tau).cos()).collect();
            let mean = vals.iter().sum::<f64>() / n as f64;
            let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
            let expected = -(-0.5 * tau * tau * sigma * sigma).exp();
            proptest::prop_assert!((mean - expected).abs() < 4.0 * sd.max(1e-6) / (n as f64).sqrt());
        }
    }
}
