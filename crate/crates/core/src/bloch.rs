//! Semiclassical Bloch-vector evolution of the clock transition.
//!
//! Conventions: a pulse with phase φ rotates the Bloch vector about
//! `(cos φ, sin φ, 0)` by its area (right-handed), free evolution rotates it
//! about `+w` by the accumulated detuning phase. Starting from the ground
//! state `(0, 0, -1)`, two φ = 0 π/2 pulses separated by `t` give
//! `w = cos(δ t)`; inserting a π pulse gives `w = -cos(φ₂ - φ₁)`.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_non_negative, ensure_positive, Error, Result};

/// Default microwave Rabi frequency, rad/s.
pub const DEFAULT_RABI: f64 = 2.0 * PI * 10e3;

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct BlochVector {
    pub u: f64,
    pub v: f64,
    pub w: f64,
}

impl BlochVector {
    pub const fn new(u: f64, v: f64, w: f64) -> Self {
        BlochVector { u, v, w }
    }

    /// |F=4, m_F=0⟩.
    pub const fn ground() -> Self {
        BlochVector { u: 0.0, v: 0.0, w: -1.0 }
    }

    /// Fully mixed state.
    pub const fn mixed() -> Self {
        BlochVector { u: 0.0, v: 0.0, w: 0.0 }
    }

    pub fn norm(&self) -> f64 {
        (self.u * self.u + self.v * self.v + self.w * self.w).sqrt()
    }

    /// Population of F=3, `(w + 1)/2`.
    pub fn p3(&self) -> f64 {
        0.5 * (self.w + 1.0)
    }

    fn dot(&self, o: &BlochVector) -> f64 {
        self.u * o.u + self.v * o.v + self.w * o.w
    }

    fn cross(&self, o: &BlochVector) -> BlochVector {
        BlochVector { u: self.v * o.w - self.w * o.v, v: self.w * o.u - self.u * o.w, w: self.u * o.v - self.v * o.u }
    }

    fn scaled(&self, s: f64) -> BlochVector {
        BlochVector { u: self.u * s, v: self.v * s, w: self.w * s }
    }

    fn add(&self, o: &BlochVector) -> BlochVector {
        BlochVector { u: self.u + o.u, v: self.v + o.v, w: self.w + o.w }
    }

    /// Rotation about the unit vector `axis` by `angle` (Rodrigues).
    pub fn rotated(&self, axis: &BlochVector, angle: f64) -> BlochVector {
        let (s, c) = angle.sin_cos();
        self.scaled(c).add(&axis.cross(self).scaled(s)).add(&axis.scaled(axis.dot(self) * (1.0 - c)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PulseMode {
    /// Rotation by the pulse area, detuning ignored, zero duration.
    #[default]
    Instantaneous,
    /// Rotation about the full torque vector for `area/Ω`.
    FiniteDuration,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseParams {
    /// Rotation angle on resonance, rad.
    pub area: f64,
    /// Rabi frequency Ω, rad/s.
    pub rabi_frequency: f64,
    /// Microwave phase φ, rad.
    pub phase: f64,
    pub mode: PulseMode,
}

impl PulseParams {
    pub fn new(area: f64) -> Self {
        PulseParams { area, rabi_frequency: DEFAULT_RABI, phase: 0.0, mode: PulseMode::Instantaneous }
    }

    pub fn half_pi() -> Self {
        Self::new(FRAC_PI_2)
    }

    pub fn pi() -> Self {
        Self::new(PI)
    }

    pub fn finite(mut self, rabi_frequency: f64) -> Self {
        self.mode = PulseMode::FiniteDuration;
        self.rabi_frequency = rabi_frequency;
        self
    }

    /// Time the pulse occupies in a sequence.
    pub fn duration(&self) -> f64 {
        match self.mode {
            PulseMode::Instantaneous => 0.0,
            PulseMode::FiniteDuration => self.area / self.rabi_frequency,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_non_negative("pulse.area", self.area)?;
        ensure_finite("pulse.phase", self.phase)?;
        if self.mode == PulseMode::FiniteDuration {
            ensure_positive("pulse.rabi_frequency", self.rabi_frequency)?;
        }
        Ok(())
    }

    fn is_pi(&self) -> bool {
        (self.area - PI).abs() < 1e-9
    }
}

pub fn apply_pulse(state: BlochVector, pulse: &PulseParams, detuning: f64) -> BlochVector {
    let (s, c) = pulse.phase.sin_cos();
    match pulse.mode {
        PulseMode::Instantaneous => state.rotated(&BlochVector::new(c, s, 0.0), pulse.area),
        PulseMode::FiniteDuration => {
            let omega = pulse.rabi_frequency;
            let omega_eff = omega.hypot(detuning);
            if omega_eff == 0.0 {
                return state;
            }
            let axis = BlochVector::new(omega * c / omega_eff, omega * s / omega_eff, detuning / omega_eff);
            state.rotated(&axis, omega_eff * pulse.duration())
        }
    }
}

/// Precession about `w` by `detuning · duration`.
pub fn free_evolve(state: BlochVector, detuning: f64, duration: f64) -> BlochVector {
    rotate_about_w(state, detuning * duration)
}

pub fn rotate_about_w(state: BlochVector, angle: f64) -> BlochVector {
    let (s, c) = angle.sin_cos();
    BlochVector { u: state.u * c - state.v * s, v: state.u * s + state.v * c, w: state.w }
}

/// Exponential relaxation of all components toward the fully mixed state.
/// `t1 = None` disables relaxation.
pub fn relax_t1(state: BlochVector, duration: f64, t1: Option<f64>) -> BlochVector {
    match t1 {
        Some(t1) if t1 > 0.0 && duration > 0.0 => state.scaled((-duration / t1).exp()),
        _ => state,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Segment {
    Pulse(PulseParams),
    FreeEvolution {
        duration: f64,
    },
    /// Motion of the lattice; `profile` indexes the experiment's transport
    /// legs. The atom precesses freely for `duration`.
    Transport {
        profile: usize,
        duration: f64,
    },
    /// State-mixing laser exposure. Inert for the coherent evolution.
    MixingWindow {
        duration: f64,
    },
}

impl Segment {
    pub fn duration(&self) -> f64 {
        match self {
            Segment::Pulse(p) => p.duration(),
            Segment::FreeEvolution { duration } | Segment::Transport { duration, .. } | Segment::MixingWindow { duration } => *duration,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    pub segments: Vec<Segment>,
}

impl PulseSequence {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        let seq = PulseSequence { segments };
        seq.validate()?;
        Ok(seq)
    }

    /// π/2 — t — π/2.
    pub fn ramsey(t: f64) -> Self {
        PulseSequence {
            segments: vec![
                Segment::Pulse(PulseParams::half_pi()),
                Segment::FreeEvolution { duration: t },
                Segment::Pulse(PulseParams::half_pi()),
            ],
        }
    }

    /// π/2 — τ_π — π — (t − τ_π) — π/2, read out at total time `t`.
    pub fn echo(tau_pi: f64, t: f64) -> Self {
        PulseSequence {
            segments: vec![
                Segment::Pulse(PulseParams::half_pi()),
                Segment::FreeEvolution { duration: tau_pi },
                Segment::Pulse(PulseParams::pi()),
                Segment::FreeEvolution { duration: t - tau_pi },
                Segment::Pulse(PulseParams::half_pi()),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::validation("sequence", "must contain at least one segment"));
        }
        for (i, seg) in self.segments.iter().enumerate() {
            let field = format!("sequence[{i}]");
            match seg {
                Segment::Pulse(p) => p.validate().map_err(|e| e.context(field))?,
                other => {
                    ensure_non_negative(&format!("{field}.duration"), other.duration())?;
                }
            }
        }
        Ok(())
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(Segment::duration).sum()
    }

    /// `(start, end)` of every segment, first segment starting at zero.
    pub fn layout(&self) -> Vec<(f64, f64)> {
        let mut t = 0.0;
        self.segments
            .iter()
            .map(|s| {
                let start = t;
                t += s.duration();
                (start, t)
            })
            .collect()
    }

    /// Centre time of the first π pulse, if any.
    pub fn pi_pulse_time(&self) -> Option<f64> {
        self.segments.iter().zip(self.layout()).find(|(s, _)| matches!(s, Segment::Pulse(p) if p.is_pi())).map(|(_, (a, b))| 0.5 * (a + b))
    }
}

/// Total detuning δ(t) seen by one atom (microwave detuning plus light shift
/// plus any fluctuations), rad/s.
pub trait DetuningTimeline {
    /// Closed interval over which the timeline is defined.
    fn domain(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }

    fn detuning_at(&self, t: f64) -> f64;

    /// ∫ δ dt over `[t0, t1]`.
    fn phase(&self, t0: f64, t1: f64) -> f64;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstantDetuning(pub f64);

impl DetuningTimeline for ConstantDetuning {
    fn detuning_at(&self, _t: f64) -> f64 {
        self.0
    }

    fn phase(&self, t0: f64, t1: f64) -> f64 {
        self.0 * (t1 - t0)
    }
}

/// Piecewise-constant detuning: `values[i]` holds on `[starts[i], starts[i+1])`,
/// the last value up to `end`.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseDetuning {
    starts: Vec<f64>,
    values: Vec<f64>,
    end: f64,
}

impl PiecewiseDetuning {
    pub fn new(starts: Vec<f64>, values: Vec<f64>, end: f64) -> Result<Self> {
        if starts.is_empty() || starts.len() != values.len() {
            return Err(Error::validation("timeline", "starts and values must be non-empty and equal length"));
        }
        if starts.windows(2).any(|w| w[1] < w[0]) || end < *starts.last().unwrap() {
            return Err(Error::validation("timeline", "breakpoints must be non-decreasing"));
        }
        Ok(PiecewiseDetuning { starts, values, end })
    }

    fn index(&self, t: f64) -> usize {
        self.starts.partition_point(|&s| s <= t).saturating_sub(1)
    }
}

impl DetuningTimeline for PiecewiseDetuning {
    fn domain(&self) -> (f64, f64) {
        (self.starts[0], self.end)
    }

    fn detuning_at(&self, t: f64) -> f64 {
        self.values[self.index(t)]
    }

    fn phase(&self, t0: f64, t1: f64) -> f64 {
        if t1 <= t0 {
            return 0.0;
        }
        let mut acc = 0.0;
        let mut i = self.index(t0);
        let mut t = t0;
        while t < t1 {
            let next = self.starts.get(i + 1).copied().unwrap_or(f64::INFINITY).min(t1);
            acc += self.values[i] * (next - t);
            t = next;
            i += 1;
        }
        acc
    }
}

/// Arbitrary δ(t) given as a closure, integrated with composite
/// Gauss–Legendre quadrature.
pub struct FnDetuning<F> {
    f: F,
    domain: (f64, f64),
    panels: usize,
}

impl<F: Fn(f64) -> f64> FnDetuning<F> {
    pub fn new(f: F, start: f64, end: f64) -> Self {
        FnDetuning { f, domain: (start, end), panels: 256 }
    }
}

impl<F: Fn(f64) -> f64> DetuningTimeline for FnDetuning<F> {
    fn domain(&self) -> (f64, f64) {
        self.domain
    }

    fn detuning_at(&self, t: f64) -> f64 {
        (self.f)(t)
    }

    fn phase(&self, t0: f64, t1: f64) -> f64 {
        // 5-point Gauss–Legendre on each panel
        const X: [f64; 5] = [0.0, -0.538_469_310_105_683_1, 0.538_469_310_105_683_1, -0.906_179_845_938_664, 0.906_179_845_938_664];
        const W: [f64; 5] =
            [0.568_888_888_888_888_9, 0.478_628_670_499_366_5, 0.478_628_670_499_366_5, 0.236_926_885_056_189_1, 0.236_926_885_056_189_1];
        if t1 <= t0 {
            return 0.0;
        }
        let h = (t1 - t0) / self.panels as f64;
        (0..self.panels)
            .map(|k| {
                let mid = t0 + (k as f64 + 0.5) * h;
                X.iter().zip(W).map(|(x, w)| w * (self.f)(mid + 0.5 * h * x)).sum::<f64>() * 0.5 * h
            })
            .sum()
    }
}

/// Hook invoked after each segment, allowing callers to act on the state
/// (incoherent processes, relaxation, bookkeeping).
pub trait SegmentHook {
    fn after_segment(&mut self, index: usize, segment: &Segment, start: f64, end: f64, state: &mut BlochVector);
}

impl SegmentHook for () {
    fn after_segment(&mut self, _: usize, _: &Segment, _: f64, _: f64, _: &mut BlochVector) {}
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SequenceOutcome {
    pub state: BlochVector,
    pub p3: f64,
}

pub fn run_sequence(seq: &PulseSequence, timeline: &dyn DetuningTimeline, initial: BlochVector) -> Result<SequenceOutcome> {
    run_sequence_with(seq, timeline, initial, &mut ())
}

pub fn run_sequence_with(
    seq: &PulseSequence,
    timeline: &dyn DetuningTimeline,
    initial: BlochVector,
    hook: &mut dyn SegmentHook,
) -> Result<SequenceOutcome> {
    seq.validate()?;
    let (lo, hi) = timeline.domain();
    let span = seq.total_duration();
    let slack = 1e-12 * span.max(1e-9);
    if lo > slack || hi < span - slack {
        return Err(Error::validation("detuning_timeline", format!("defined on [{lo}, {hi}] but the sequence spans [0, {span}]")));
    }
    let mut state = initial;
    for (i, (seg, (start, end))) in seq.segments.iter().zip(seq.layout()).enumerate() {
        state = match seg {
            Segment::Pulse(p) => apply_pulse(state, p, timeline.detuning_at(0.5 * (start + end))),
            _ => rotate_about_w(state, timeline.phase(start, end)),
        };
        hook.after_segment(i, seg, start, end, &mut state);
    }
    Ok(SequenceOutcome { state, p3: state.p3() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: BlochVector, b: BlochVector, tol: f64) -> bool {
        (a.u - b.u).abs() < tol && (a.v - b.v).abs() < tol && (a.w - b.w).abs() < tol
    }

    /// RK4 integration of dr/dt = Ω × r with Ω = (Ω cos φ, Ω sin φ, δ).
    fn bloch_rk4(state: BlochVector, omega: f64, phase: f64, detuning: f64, duration: f64, steps: usize) -> BlochVector {
        let torque = BlochVector::new(omega * phase.cos(), omega * phase.sin(), detuning);
        let f = |r: &BlochVector| torque.cross(r);
        let h = duration / steps as f64;
        let mut r = state;
        for _ in 0..steps {
            let k1 = f(&r);
            let k2 = f(&r.add(&k1.scaled(h / 2.0)));
            let k3 = f(&r.add(&k2.scaled(h / 2.0)));
            let k4 = f(&r.add(&k3.scaled(h)));
            r = r.add(&k1.add(&k2.scaled(2.0)).add(&k3.scaled(2.0)).add(&k4).scaled(h / 6.0));
        }
        r
    }

    #[test]
    fn pi_pulse_inverts() {
        let s = apply_pulse(BlochVector::ground(), &PulseParams::pi(), 0.0);
        assert!(close(s, BlochVector::new(0.0, 0.0, 1.0), 1e-15));
    }

    #[test]
    fn half_pi_pulse_reaches_equator() {
        let s = apply_pulse(BlochVector::ground(), &PulseParams::half_pi(), 0.0);
        assert!(s.w.abs() < 1e-15);
        assert!((s.u.hypot(s.v) - 1.0).abs() < 1e-15);
        assert!(close(s, BlochVector::new(0.0, 1.0, 0.0), 1e-15));
    }

    #[test]
    fn finite_pi_pulse_matches_rk4() {
        let omega = DEFAULT_RABI;
        let pulse = PulseParams::pi().finite(omega);
        let s = apply_pulse(BlochVector::ground(), &pulse, omega);
        let oracle = bloch_rk4(BlochVector::ground(), omega, 0.0, omega, pulse.duration(), 20_000);
        assert!(close(s, oracle, 1e-9), "{s:?} vs {oracle:?}");
        // off-resonant π pulse leaves w = -1 + 2 Ω²/Ω_eff² sin²(Ω_eff τ/2)
        let x = std::f64::consts::SQRT_2 * PI / 2.0;
        assert!((s.w - (-1.0 + x.sin().powi(2))).abs() < 1e-12);
    }

    #[test]
    fn free_evolution_cases() {
        let s = BlochVector::new(0.3, -0.4, 0.5);
        assert_eq!(free_evolve(s, 123.0, 0.0), s);
        let x = BlochVector::new(1.0, 0.0, 0.0);
        assert!(close(free_evolve(x, 2.0 * PI, 1.0), x, 1e-15));
        // rotation matrix oracle
        let a = PI / 3.0;
        let r = free_evolve(x, a / 2.0, 2.0);
        assert!(close(r, BlochVector::new(0.5, 3f64.sqrt() / 2.0, 0.0), 1e-15));
    }

    #[test]
    fn ramsey_resonant_and_half_turn() {
        let seq = PulseSequence::ramsey(1e-3);
        let out = run_sequence(&seq, &ConstantDetuning(0.0), BlochVector::ground()).unwrap();
        assert!((out.state.w - 1.0).abs() < 1e-15 && (out.p3 - 1.0).abs() < 1e-15);
        let out = run_sequence(&seq, &ConstantDetuning(PI / 1e-3), BlochVector::ground()).unwrap();
        assert!((out.state.w + 1.0).abs() < 1e-12 && out.p3.abs() < 1e-12);
    }

    #[test]
    fn echo_refocuses_constant_detuning() {
        for delta in [-5000.0, -17.0, 0.0, 3.3, 1234.5] {
            let seq = PulseSequence::echo(4e-3, 8e-3);
            let out = run_sequence(&seq, &ConstantDetuning(delta), BlochVector::ground()).unwrap();
            assert!((out.state.w + 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn t1_relaxation() {
        let g = BlochVector::ground();
        assert_eq!(relax_t1(g, 0.0, Some(8.0)), g);
        assert_eq!(relax_t1(g, 5.0, None), g);
        let r = relax_t1(g, 8.0, Some(8.0));
        assert!((r.w + (-1.0f64).exp()).abs() < 1e-15);
        let r = relax_t1(g, 2.5, Some(2.5));
        assert!((r.w + 1.0 / std::f64::consts::E).abs() < 1e-15);
    }

    #[test]
    fn timeline_domain_checked() {
        let seq = PulseSequence::ramsey(1e-3);
        let tl = PiecewiseDetuning::new(vec![0.0], vec![1.0], 0.5e-3).unwrap();
        assert!(run_sequence(&seq, &tl, BlochVector::ground()).is_err());
        let tl = FnDetuning::new(|_| 0.0, 0.0, 2e-3);
        assert!(run_sequence(&seq, &tl, BlochVector::ground()).is_ok());
    }

    #[test]
    fn piecewise_phase_integral() {
        let tl = PiecewiseDetuning::new(vec![0.0, 1.0, 3.0], vec![2.0, -1.0, 5.0], 4.0).unwrap();
        assert!((tl.phase(0.0, 4.0) - (2.0 - 2.0 + 5.0)).abs() < 1e-15);
        assert!((tl.phase(0.5, 2.0) - (1.0 - 1.0)).abs() < 1e-15);
        assert_eq!(tl.detuning_at(3.5), 5.0);
        let f = FnDetuning::new(|t: f64| t * t, 0.0, 2.0);
        assert!((f.phase(0.0, 2.0) - 8.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn pi_time_located() {
        assert_eq!(PulseSequence::echo(4e-3, 9e-3).pi_pulse_time(), Some(4e-3));
        assert_eq!(PulseSequence::ramsey(1e-3).pi_pulse_time(), None);
        assert!(PulseSequence::new(vec![]).is_err());
        assert!(PulseSequence::new(vec![Segment::FreeEvolution { duration: -1.0 }]).is_err());
    }

    #[test]
    fn finite_converges_to_instantaneous() {
        let delta = 2.0 * PI * 2e3;
        let ideal = apply_pulse(BlochVector::ground(), &PulseParams::half_pi(), delta);
        let mut last = f64::INFINITY;
        for k in 0..6 {
            let omega = DEFAULT_RABI * 4f64.powi(k);
            let s = apply_pulse(BlochVector::ground(), &PulseParams::half_pi().finite(omega), delta);
            let err = ((s.u - ideal.u).powi(2) + (s.v - ideal.v).powi(2) + (s.w - ideal.w).powi(2)).sqrt();
            assert!(err < last, "k={k}: {err} >= {last}");
            last = err;
        }
        assert!(last < 1e-3);
    }

    proptest! {
        #[test]
        fn rotations_preserve_norm(u in -0.6f64..0.6, v in -0.6f64..0.6, w in -0.5f64..0.5,
                                   area in 0.0f64..7.0, phase in -4.0f64..4.0, det in -1e5f64..1e5) {
            let s = BlochVector::new(u, v, w);
            let n0 = s.norm();
            let p = PulseParams { area, rabi_frequency: DEFAULT_RABI, phase, mode: PulseMode::FiniteDuration };
            prop_assert!((apply_pulse(s, &p, det).norm() - n0).abs() < 1e-9);
            let p = PulseParams { mode: PulseMode::Instantaneous, ..p };
            prop_assert!((apply_pulse(s, &p, det).norm() - n0).abs() < 1e-9);
            prop_assert!((free_evolve(s, det, 1e-3).norm() - n0).abs() < 1e-9);
        }

        #[test]
        fn ramsey_reproduces_cosine(delta in -2e4f64..2e4, t in 0.0f64..5e-3) {
            let out = run_sequence(&PulseSequence::ramsey(t), &ConstantDetuning(delta), BlochVector::ground()).unwrap();
            prop_assert!((out.state.w - (delta * t).cos()).abs() < 1e-9);
        }

        #[test]
        fn echo_reproduces_jump(mean in -2e4f64..2e4, jump in -500.0f64..500.0, tau in 1e-4f64..0.1) {
            let tl = PiecewiseDetuning::new(vec![0.0, tau], vec![mean, mean + jump], 2.0 * tau).unwrap();
            let out = run_sequence(&PulseSequence::echo(tau, 2.0 * tau), &tl, BlochVector::ground()).unwrap();
            prop_assert!((out.state.w + (jump * tau).cos()).abs() < 1e-9);
        }
    }
}
