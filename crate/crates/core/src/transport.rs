//! Classical axial motion of an atom in an accelerated standing wave.
//!
//! In the frame co-moving with the lattice the atom feels
//! `m z̈ = −∂U/∂z − m a(t)` with `U(z) = U₀ sin²(kz)` (zero at the well
//! bottom). Energies are always reported without the inertial tilt term,
//! i.e. `E = ½ m v² + U(z)`.
//!
//! Integration uses velocity Verlet. Every segment of an [`AccelProfile`]
//! is split into an integer number of equal steps so that acceleration
//! jumps fall exactly on step boundaries.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dephasing::{sample_energy, EnsembleSpec};
use crate::error::{ensure_non_negative, ensure_positive, Error, Result};
use crate::trap::TrapConfig;

/// Default integration step as a fraction of the axial period.
pub const DEFAULT_STEPS_PER_PERIOD: f64 = 500.0;
/// Coarsest step accepted by the integrator, as a fraction of the period.
pub const MIN_STEPS_PER_PERIOD: f64 = 200.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccelSegment {
    pub duration: f64,
    pub acceleration: f64,
}

/// Piecewise-constant lattice acceleration, starting from rest.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AccelProfile {
    pub segments: Vec<AccelSegment>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProfileKind {
    /// `+a` for half the move time, then `−a`.
    BangBangOneWay,
    /// Out and back, with a pause of `hold` seconds at the far end.
    RoundTrip { hold: f64 },
}

impl AccelProfile {
    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Times at which the acceleration changes value, including the switch
    /// on at t = 0 and the switch off at the end.
    pub fn jump_times(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut t = 0.0;
        let mut prev = 0.0;
        for s in &self.segments {
            if s.acceleration != prev {
                out.push(t);
            }
            prev = s.acceleration;
            t += s.duration;
        }
        if prev != 0.0 {
            out.push(t);
        }
        out
    }

    /// Lattice velocity and displacement at time `t` (lab frame).
    pub fn kinematics_at(&self, t: f64) -> (f64, f64) {
        let (mut x, mut v, mut t0) = (0.0, 0.0, 0.0);
        for s in &self.segments {
            let dt = (t - t0).clamp(0.0, s.duration);
            x += v * dt + 0.5 * s.acceleration * dt * dt;
            v += s.acceleration * dt;
            t0 += s.duration;
            if t <= t0 {
                break;
            }
        }
        (v, x)
    }

    pub fn displacement(&self) -> f64 {
        self.kinematics_at(self.total_duration()).1
    }

    pub fn final_velocity(&self) -> f64 {
        self.kinematics_at(self.total_duration()).0
    }

    /// Same motion in the opposite direction.
    pub fn mirrored(&self) -> AccelProfile {
        AccelProfile { segments: self.segments.iter().map(|s| AccelSegment { acceleration: -s.acceleration, ..*s }).collect() }
    }

    /// Segment order reversed; the time-reversed motion.
    pub fn time_reversed(&self) -> AccelProfile {
        AccelProfile { segments: self.segments.iter().rev().copied().collect() }
    }

    /// Profile delayed by `delay` seconds of zero acceleration.
    pub fn delayed(&self, delay: f64) -> AccelProfile {
        let mut segments = vec![AccelSegment { duration: delay, acceleration: 0.0 }];
        segments.extend_from_slice(&self.segments);
        AccelProfile { segments }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.segments.iter().enumerate() {
            ensure_non_negative(&format!("profile[{i}].duration"), s.duration)?;
            if !s.acceleration.is_finite() {
                return Err(Error::validation(format!("profile[{i}].acceleration"), "must be finite"));
            }
        }
        Ok(())
    }
}

/// Bang-bang profile covering `distance` in `t_move` (`a = 4d/t²`).
pub fn make_accel_profile(distance: f64, t_move: f64, kind: ProfileKind) -> Result<AccelProfile> {
    ensure_non_negative("distance", distance)?;
    ensure_positive("t_move", t_move)?;
    let a = 4.0 * distance / (t_move * t_move);
    let half = 0.5 * t_move;
    let out = [AccelSegment { duration: half, acceleration: a }, AccelSegment { duration: half, acceleration: -a }];
    let segments = match kind {
        ProfileKind::BangBangOneWay => out.to_vec(),
        ProfileKind::RoundTrip { hold } => {
            ensure_non_negative("hold", hold)?;
            let mut s = out.to_vec();
            s.push(AccelSegment { duration: hold, acceleration: 0.0 });
            s.extend(out.iter().map(|x| AccelSegment { acceleration: -x.acceleration, ..*x }));
            s
        }
    };
    Ok(AccelProfile { segments })
}

/// The one-dimensional sinusoidal lattice seen along the trap axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lattice {
    pub depth: f64,
    pub k: f64,
    pub mass: f64,
}

impl Lattice {
    pub fn from_trap(trap: &TrapConfig) -> Result<Self> {
        trap.validate()?;
        ensure_positive("depth_U0", trap.depth)?;
        Ok(Lattice { depth: trap.depth, k: trap.wavenumber(), mass: trap.constants.atom_mass })
    }

    pub fn potential(&self, z: f64) -> f64 {
        self.depth * (self.k * z).sin().powi(2)
    }

    /// Force per unit mass from the lattice, `−U'(z)/m`.
    fn lattice_accel(&self, z: f64) -> f64 {
        -self.depth * self.k * (2.0 * self.k * z).sin() / self.mass
    }

    pub fn energy(&self, z: f64, v: f64) -> f64 {
        0.5 * self.mass * v * v + self.potential(z)
    }

    /// Small-oscillation angular frequency `k√(2U₀/m)`.
    pub fn omega_axial(&self) -> f64 {
        self.k * (2.0 * self.depth / self.mass).sqrt()
    }

    pub fn axial_period(&self) -> f64 {
        TAU / self.omega_axial()
    }

    pub fn default_dt(&self) -> f64 {
        self.axial_period() / DEFAULT_STEPS_PER_PERIOD
    }

    /// Exact oscillation period at energy `e` (pendulum, `4K(m)/ω`).
    pub fn orbit_period(&self, e: f64) -> f64 {
        let m = (e / self.depth).clamp(0.0, 1.0);
        4.0 * elliptic_k(m) / self.omega_axial()
    }

    /// Outer turning point for energy `e`.
    pub fn turning_point(&self, e: f64) -> f64 {
        (e / self.depth).clamp(0.0, 1.0).sqrt().asin() / self.k
    }
}

/// Complete elliptic integral of the first kind, parameter `m = k²`.
pub fn elliptic_k(m: f64) -> f64 {
    if m >= 1.0 {
        return f64::INFINITY;
    }
    let (mut a, mut g) = (1.0, (1.0 - m).sqrt());
    while (a - g).abs() > 1e-15 * a {
        let next = 0.5 * (a + g);
        g = (a * g).sqrt();
        a = next;
    }
    PI / (2.0 * a)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomPhaseState {
    /// Position in the co-moving frame, m.
    pub position: f64,
    pub velocity: f64,
    /// `½mv² + U(z)`, J.
    pub energy: f64,
}

impl AtomPhaseState {
    pub fn new(position: f64, velocity: f64, lattice: &Lattice) -> Self {
        AtomPhaseState { position, velocity, energy: lattice.energy(position, velocity) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub z: f64,
    pub v: f64,
    pub e_over_u0: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryResult {
    pub final_state: AtomPhaseState,
    /// The atom crossed a lattice maximum or ended with `E ≥ U₀`.
    pub escaped: bool,
    /// Recorded samples; empty unless requested.
    pub trajectory: Vec<TrajectorySample>,
}

impl TrajectoryResult {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t_s,z_m,v_mps,E_over_U0")?;
        for s in &self.trajectory {
            writeln!(w, "{:?},{:?},{:?},{:?}", s.t, s.z, s.v, s.e_over_u0)?;
        }
        Ok(())
    }
}

/// Integrates one trajectory through `profile`. `record_every = Some(n)`
/// stores every n-th step.
pub fn integrate_trajectory(
    initial: &AtomPhaseState,
    profile: &AccelProfile,
    trap: &TrapConfig,
    dt: f64,
    record_every: Option<usize>,
) -> Result<TrajectoryResult> {
    let lattice = Lattice::from_trap(trap)?;
    integrate_in_lattice(initial, profile, &lattice, dt, record_every)
}

pub fn integrate_in_lattice(
    initial: &AtomPhaseState,
    profile: &AccelProfile,
    lattice: &Lattice,
    dt: f64,
    record_every: Option<usize>,
) -> Result<TrajectoryResult> {
    profile.validate()?;
    ensure_positive("dt", dt)?;
    let limit = lattice.axial_period() / MIN_STEPS_PER_PERIOD;
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::validation("dt", format!("{dt:e} s exceeds T_axial/200 = {limit:e} s")));
    }
    let (mut z, mut v) = (initial.position, initial.velocity);
    // index of the well the atom started in
    let well = |z: f64| (lattice.k * z / PI).round();
    let home = well(z);
    let mut escaped = false;
    let mut trajectory = Vec::new();
    let mut t = 0.0;
    let mut step_count = 0usize;
    let mut record = |t: f64, z: f64, v: f64, n: usize| {
        if let Some(every) = record_every {
            if n.is_multiple_of(every.max(1)) {
                trajectory.push(TrajectorySample { t, z, v, e_over_u0: lattice.energy(z, v) / lattice.depth });
            }
        }
    };
    record(t, z, v, 0);
    for seg in &profile.segments {
        if seg.duration == 0.0 {
            continue;
        }
        let n = (seg.duration / dt).ceil().max(1.0) as usize;
        let h = seg.duration / n as f64;
        let mut acc = lattice.lattice_accel(z) - seg.acceleration;
        for i in 0..n {
            v += 0.5 * h * acc;
            z += h * v;
            acc = lattice.lattice_accel(z) - seg.acceleration;
            v += 0.5 * h * acc;
            step_count += 1;
            if !escaped && well(z) != home {
                escaped = true;
            }
            record(t + (i + 1) as f64 * h, z, v, step_count);
        }
        t += seg.duration;
    }
    let final_state = AtomPhaseState::new(z, v, lattice);
    escaped |= final_state.energy >= lattice.depth;
    Ok(TrajectoryResult { final_state, escaped, trajectory })
}

/// `n` states evenly spaced in time along the unperturbed orbit of energy
/// `energy`, starting at the outer turning point.
pub fn orbit_phase_states(energy: f64, n: usize, lattice: &Lattice, dt: f64) -> Result<Vec<AtomPhaseState>> {
    ensure_non_negative("energy", energy)?;
    if energy >= lattice.depth {
        return Err(Error::validation("energy", "must lie below the trap depth"));
    }
    let start = AtomPhaseState::new(lattice.turning_point(energy), 0.0, lattice);
    if energy == 0.0 {
        return Ok(vec![start; n]);
    }
    let step = lattice.orbit_period(energy) / n as f64;
    let idle = AccelProfile { segments: vec![AccelSegment { duration: step, acceleration: 0.0 }] };
    let mut states = Vec::with_capacity(n);
    let mut s = start;
    for _ in 0..n {
        states.push(s);
        s = integrate_in_lattice(&s, &idle, lattice, dt.min(step / 4.0), None)?.final_state;
    }
    Ok(states)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatingStats {
    pub initial_energy: f64,
    pub max_gain: f64,
    pub mean_gain: f64,
    /// Energy gain for each initial phase, J.
    pub gains: Vec<f64>,
    pub escaped: Vec<bool>,
}

/// Energy gain over `n_phases` initial oscillation phases at fixed energy.
pub fn heating_stats(e0: f64, n_phases: usize, profile: &AccelProfile, trap: &TrapConfig, dt: f64) -> Result<HeatingStats> {
    if n_phases < 32 {
        return Err(Error::validation("n_phases", format!("need at least 32, got {n_phases}")));
    }
    let lattice = Lattice::from_trap(trap)?;
    heating_in_lattice(e0, n_phases, profile, &lattice, dt)
}

fn heating_in_lattice(e0: f64, n_phases: usize, profile: &AccelProfile, lattice: &Lattice, dt: f64) -> Result<HeatingStats> {
    let starts = orbit_phase_states(e0, n_phases, lattice, dt)?;
    let results = starts.par_iter().map(|s| integrate_in_lattice(s, profile, lattice, dt, None)).collect::<Result<Vec<_>>>()?;
    let gains: Vec<f64> = results.iter().map(|r| r.final_state.energy - e0).collect();
    let escaped = results.iter().map(|r| r.escaped).collect();
    let max_gain = gains.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean_gain = gains.iter().sum::<f64>() / gains.len() as f64;
    Ok(HeatingStats { initial_energy: e0, max_gain, mean_gain, gains, escaped })
}

/// Harmonic adiabatic lowering/raising, `E' = E·√(U_to/U_from)`. Returns
/// the new energy and whether the atom is lost (`E' ≥ U_to`).
pub fn adiabatic_ramp(energy: f64, u0_from: f64, u0_to: f64) -> Result<(f64, bool)> {
    ensure_non_negative("energy", energy)?;
    ensure_positive("u0_from", u0_from)?;
    ensure_positive("u0_to", u0_to)?;
    let e = energy * (u0_to / u0_from).sqrt();
    Ok((e, e >= u0_to))
}

/// Tabulated single-leg heating, used by the Monte-Carlo engine to update
/// atom energies without integrating every trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatingTable {
    pub depth: f64,
    /// Grid of initial energies as fractions of the depth.
    pub energy_fractions: Vec<f64>,
    /// `gains[i][j]`: ΔE/U₀ at energy `i`, phase `j`.
    pub gains: Vec<Vec<f64>>,
    pub escaped: Vec<Vec<bool>>,
}

impl HeatingTable {
    pub fn build(profile: &AccelProfile, trap: &TrapConfig, n_energies: usize, n_phases: usize, dt: Option<f64>) -> Result<Self> {
        if n_energies < 2 || n_phases < 1 {
            return Err(Error::validation("heating_table", "need at least two energies and one phase"));
        }
        let lattice = Lattice::from_trap(trap)?;
        let dt = dt.unwrap_or_else(|| lattice.default_dt());
        let max_fraction = 0.95;
        let energy_fractions: Vec<f64> = (0..n_energies).map(|i| max_fraction * i as f64 / (n_energies - 1) as f64).collect();
        let rows = energy_fractions
            .par_iter()
            .map(|&f| {
                let e0 = f * lattice.depth;
                let starts = orbit_phase_states(e0, n_phases, &lattice, dt)?;
                let mut g = Vec::with_capacity(n_phases);
                let mut esc = Vec::with_capacity(n_phases);
                for s in &starts {
                    let r = integrate_in_lattice(s, profile, &lattice, dt, None)?;
                    g.push((r.final_state.energy - e0) / lattice.depth);
                    esc.push(r.escaped);
                }
                Ok((g, esc))
            })
            .collect::<Result<Vec<_>>>()?;
        let (gains, escaped) = rows.into_iter().unzip();
        Ok(HeatingTable { depth: lattice.depth, energy_fractions, gains, escaped })
    }

    /// Energy gain (J) for an atom of energy `energy` at phase `u ∈ [0,1)`,
    /// and whether it escapes.
    pub fn sample(&self, energy: f64, u: f64) -> (f64, bool) {
        let n_phases = self.gains[0].len();
        let j = ((u * n_phases as f64) as usize).min(n_phases - 1);
        let f = (energy / self.depth).max(0.0);
        let last = self.energy_fractions.len() - 1;
        let top = self.energy_fractions[last];
        let (i, w) = if f >= top {
            (last - 1, 1.0)
        } else {
            let step = top / last as f64;
            let i = ((f / step) as usize).min(last - 1);
            (i, (f - self.energy_fractions[i]) / step)
        };
        let gain = (1.0 - w) * self.gains[i][j] + w * self.gains[i + 1][j];
        let escaped = if w < 0.5 { self.escaped[i][j] } else { self.escaped[i + 1][j] };
        let new_energy = energy + gain * self.depth;
        (gain * self.depth, escaped || new_energy >= self.depth)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PipelineStep {
    Ramp { to_depth: f64 },
    Transport { profile: AccelProfile },
}

/// Monte-Carlo survival through a sequence of ramps and transports.
pub fn survival_fraction<R: Rng + ?Sized>(
    ensemble: &EnsembleSpec,
    pipeline: &[PipelineStep],
    trap: &TrapConfig,
    n_atoms: usize,
    rng: &mut R,
) -> Result<f64> {
    if n_atoms == 0 {
        return Err(Error::validation("n_atoms", "must be positive"));
    }
    if pipeline.is_empty() {
        return Ok(1.0);
    }
    // heating tables for each transport at the depth it runs at
    let mut depth = trap.depth;
    let mut tables = Vec::new();
    for step in pipeline {
        match step {
            PipelineStep::Ramp { to_depth } => {
                ensure_positive("ramp.to_depth", *to_depth)?;
                depth = *to_depth;
                tables.push(None);
            }
            PipelineStep::Transport { profile } => {
                let t = trap.with_depth(depth);
                tables.push(Some(HeatingTable::build(profile, &t, 12, 32, None)?));
            }
        }
    }
    let mut survivors = 0usize;
    for _ in 0..n_atoms {
        let mut e = sample_energy(ensemble, rng)?;
        let mut depth = trap.depth;
        let mut alive = true;
        for (step, table) in pipeline.iter().zip(&tables) {
            match (step, table) {
                (PipelineStep::Ramp { to_depth }, _) => {
                    let (e2, lost) = adiabatic_ramp(e, depth, *to_depth)?;
                    e = e2;
                    depth = *to_depth;
                    alive &= !lost;
                }
                (PipelineStep::Transport { .. }, Some(table)) => {
                    let (gain, lost) = table.sample(e, rng.random::<f64>());
                    e = (e + gain).max(0.0);
                    alive &= !lost;
                }
                _ => unreachable!(),
            }
            if !alive {
                break;
            }
        }
        survivors += alive as usize;
    }
    Ok(survivors as f64 / n_atoms as f64)
}

/// Round-trip profile used for the 1 mm shuttle: 2 ms per leg, 3 ms pause.
pub fn shuttle_profile() -> AccelProfile {
    make_accel_profile(1e-3, 2e-3, ProfileKind::RoundTrip { hold: 3e-3 }).expect("static profile")
}
