//! Shot-level Monte-Carlo simulation of the measurement procedure.
//!
//! Each swept point is repeated for a number of shots. A shot loads a
//! random number of atoms; each atom survives the transfer into the trap,
//! is optically pumped (or left behind as an F=4 spectator), receives a
//! thermal energy and runs through the microwave sequence. State-selective
//! push-out then converts the internal state into survival, and
//! `P₃ = detected / initial` is recorded per shot.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::sync::{Arc, Mutex, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allan::{sample_detuning_jump, AllanSource, VisibilityModel};
use crate::bloch::{
    relax_t1, run_sequence_with, BlochVector, PiecewiseDetuning, PulseMode, PulseParams, PulseSequence, Segment, SegmentHook, DEFAULT_RABI,
};
use crate::dephasing::{sample_energy, EnsembleSpec};
use crate::error::{ensure_non_negative, ensure_positive, ensure_probability, Error, Result};
use crate::transport::{adiabatic_ramp, make_accel_profile, AccelProfile, HeatingTable, ProfileKind};
use crate::trap::{derive_trap_params, lightshift_unchecked, DerivedTrapParams, TrapConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionModel {
    pub p_survive_given_f4: f64,
    pub p_survive_given_f3: f64,
}

impl Default for DetectionModel {
    fn default() -> Self {
        DetectionModel { p_survive_given_f4: 0.01, p_survive_given_f3: 0.95 }
    }
}

impl DetectionModel {
    pub fn ideal() -> Self {
        DetectionModel { p_survive_given_f4: 0.0, p_survive_given_f3: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_probability("detection.p_survive_given_F4", self.p_survive_given_f4)?;
        ensure_probability("detection.p_survive_given_F3", self.p_survive_given_f3)?;
        if self.p_survive_given_f3 <= self.p_survive_given_f4 {
            return Err(Error::validation("detection", "F=3 survival must exceed F=4 survival"));
        }
        Ok(())
    }

    /// Push-out outcome for an atom in F=3 (`true`) or F=4.
    pub fn survives<R: Rng + ?Sized>(&self, in_f3: bool, rng: &mut R) -> bool {
        let p = if in_f3 { self.p_survive_given_f3 } else { self.p_survive_given_f4 };
        rng.random::<f64>() < p
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingLaserConfig {
    /// Photon scattering rate at the beam centre, 1/s.
    pub scattering_rate_peak: f64,
    pub waist: f64,
    pub window_duration: f64,
    /// Beam centre along the transport axis, m from the loading position.
    pub center_position: f64,
}

impl Default for MixingLaserConfig {
    fn default() -> Self {
        MixingLaserConfig { scattering_rate_peak: 2e3, waist: 50e-6, window_duration: 3e-3, center_position: 0.0 }
    }
}

impl MixingLaserConfig {
    pub fn validate(&self) -> Result<()> {
        ensure_non_negative("mixing.scattering_rate_peak", self.scattering_rate_peak)?;
        ensure_positive("mixing.waist", self.waist)?;
        ensure_non_negative("mixing.window_duration", self.window_duration)?;
        if !self.center_position.is_finite() {
            return Err(Error::validation("mixing.center_position", "must be finite"));
        }
        Ok(())
    }

    pub fn rate_at(&self, z: f64) -> f64 {
        let d = z - self.center_position;
        self.scattering_rate_peak * (-2.0 * d * d / (self.waist * self.waist)).exp()
    }
}

/// Probability of at least one scattering event along a sampled
/// trajectory `(t, z)` (trapezoidal rule).
pub fn scatter_probability(trajectory: &[(f64, f64)], cfg: &MixingLaserConfig) -> f64 {
    let integral: f64 = trajectory.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (cfg.rate_at(w[0].1) + cfg.rate_at(w[1].1))).sum();
    1.0 - (-integral).exp()
}

/// A scattered photon leaves the atom fully mixed.
pub fn mixing_collapse<R: Rng + ?Sized>(
    state: BlochVector,
    trajectory: &[(f64, f64)],
    cfg: &MixingLaserConfig,
    rng: &mut R,
) -> BlochVector {
    if rng.random::<f64>() < scatter_probability(trajectory, cfg) {
        BlochVector::mixed()
    } else {
        state
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportConfig {
    pub distance: f64,
    /// Duration of each leg, s.
    pub move_time: f64,
    /// Pause at the far position, centred on the π pulse, s.
    pub hold: f64,
    /// Phase grid of the heating table.
    pub n_phases: usize,
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig { distance: 1e-3, move_time: 2e-3, hold: 3e-3, n_phases: 64 }
    }
}

impl TransportConfig {
    pub fn validate(&self) -> Result<()> {
        ensure_non_negative("transport.distance", self.distance)?;
        ensure_positive("transport.move_time", self.move_time)?;
        ensure_non_negative("transport.hold", self.hold)?;
        if self.n_phases < 32 {
            return Err(Error::validation("transport.n_phases", "need at least 32"));
        }
        Ok(())
    }

    pub fn leg(&self) -> Result<AccelProfile> {
        make_accel_profile(self.distance, self.move_time, ProfileKind::BangBangOneWay)
    }
}

/// Adiabatic lowering from a deeper, hotter loading trap. The ramp only
/// decides which atoms are lost; survivors are thermalised at the
/// experiment temperature.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoweringConfig {
    pub from_depth: f64,
    pub from_temperature: f64,
}

/// Homogeneous (shot-to-shot) detuning noise for echo sequences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub allan: AllanSource,
    pub misalignment: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AtomCount {
    #[default]
    Poisson,
    Fixed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SweepKind {
    /// Swept value is the delay between the π/2 pulses.
    Ramsey,
    /// Swept value is the time of the final π/2 pulse; π pulse at `tau_pi`.
    Echo { tau_pi: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub trap: TrapConfig,
    /// Microwave detuning from the unperturbed clock transition, rad/s.
    pub detuning: f64,
    pub sweep: SweepKind,
    pub points: Vec<f64>,
    pub pulse_mode: PulseMode,
    pub rabi_frequency: f64,
    pub shots_per_point: usize,
    pub atoms_per_shot: usize,
    pub atom_count: AtomCount,
    pub prep_efficiency: f64,
    pub transfer_survival: f64,
    pub detection: DetectionModel,
    pub noise: Option<NoiseConfig>,
    pub transport: Option<TransportConfig>,
    pub mixing: Option<MixingLaserConfig>,
    pub lowering: Option<LoweringConfig>,
    pub t1: Option<f64>,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn new(trap: TrapConfig, sweep: SweepKind, points: Vec<f64>) -> Self {
        ExperimentConfig {
            trap,
            detuning: 0.0,
            sweep,
            points,
            pulse_mode: PulseMode::Instantaneous,
            rabi_frequency: DEFAULT_RABI,
            shots_per_point: 30,
            atoms_per_shot: 50,
            atom_count: AtomCount::Poisson,
            prep_efficiency: 0.8,
            transfer_survival: 0.8,
            detection: DetectionModel::default(),
            noise: None,
            transport: None,
            mixing: None,
            lowering: None,
            t1: None,
            seed: 0,
        }
    }

    /// Perfect preparation, transfer and detection.
    pub fn idealized(mut self) -> Self {
        self.prep_efficiency = 1.0;
        self.transfer_survival = 1.0;
        self.detection = DetectionModel::ideal();
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.trap.validate()?;
        ensure_positive("trap.depth_U0", self.trap.depth)?;
        if !self.detuning.is_finite() {
            return Err(Error::validation("detuning", "must be finite"));
        }
        if self.points.is_empty() {
            return Err(Error::validation("points", "swept grid must be non-empty"));
        }
        if self.points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::validation("points", "swept grid must be strictly increasing"));
        }
        for (i, x) in self.points.iter().enumerate() {
            ensure_non_negative(&format!("points[{i}]"), *x)?;
        }
        ensure_positive("rabi_frequency", self.rabi_frequency)?;
        if self.shots_per_point == 0 {
            return Err(Error::validation("shots_per_point", "must be at least 1"));
        }
        if self.atoms_per_shot == 0 {
            return Err(Error::validation("atoms_per_shot", "must be at least 1"));
        }
        ensure_probability("prep_efficiency", self.prep_efficiency)?;
        ensure_probability("transfer_survival", self.transfer_survival)?;
        self.detection.validate()?;
        if let Some(n) = &self.noise {
            VisibilityModel { delta0: 0.0, v0: 1.0, allan: n.allan.clone(), misalignment: n.misalignment }.validate()?;
        }
        if let Some(t) = &self.transport {
            t.validate()?;
            if !matches!(self.sweep, SweepKind::Echo { .. }) {
                return Err(Error::validation("transport", "requires an echo sweep"));
            }
        }
        if let Some(m) = &self.mixing {
            m.validate()?;
        }
        if let Some(l) = &self.lowering {
            ensure_positive("lowering.from_depth", l.from_depth)?;
            ensure_positive("lowering.from_temperature", l.from_temperature)?;
        }
        if let Some(t1) = self.t1 {
            ensure_positive("t1", t1)?;
        }
        for &x in &self.points {
            self.sequence_at(x)?;
        }
        Ok(())
    }

    fn pulse(&self, area: f64) -> PulseParams {
        let p = PulseParams::new(area);
        match self.pulse_mode {
            PulseMode::Instantaneous => p,
            PulseMode::FiniteDuration => p.finite(self.rabi_frequency),
        }
    }

    /// Pulse sequence for swept value `x`.
    pub fn sequence_at(&self, x: f64) -> Result<PulseSequence> {
        use std::f64::consts::{FRAC_PI_2, PI};
        let half = Segment::Pulse(self.pulse(FRAC_PI_2));
        let free = |d: f64| Segment::FreeEvolution { duration: d };
        let segments = match (self.sweep, &self.transport) {
            (SweepKind::Ramsey, _) => vec![half, free(x), half],
            (SweepKind::Echo { tau_pi }, None) => {
                if x < tau_pi {
                    return Err(Error::validation("points", format!("echo readout {x} s precedes the π pulse at {tau_pi} s")));
                }
                vec![half, free(tau_pi), Segment::Pulse(self.pulse(PI)), free(x - tau_pi), half]
            }
            (SweepKind::Echo { tau_pi }, Some(t)) => {
                let lead = tau_pi - 0.5 * t.hold - t.move_time;
                let tail = x - tau_pi - 0.5 * t.hold - t.move_time;
                if lead < 0.0 || tail < 0.0 {
                    return Err(Error::validation(
                        "points",
                        format!("readout at {x} s leaves no room for transport around τ_π = {tau_pi} s"),
                    ));
                }
                vec![
                    half,
                    free(lead),
                    Segment::Transport { profile: 0, duration: t.move_time },
                    free(0.5 * t.hold),
                    Segment::Pulse(self.pulse(PI)),
                    free(0.5 * t.hold),
                    Segment::Transport { profile: 1, duration: t.move_time },
                    free(tail),
                    half,
                ]
            }
        };
        PulseSequence::new(segments)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataPoint {
    pub x: f64,
    pub p3_mean: f64,
    pub p3_stderr: f64,
    pub n_detected: u64,
    pub n_initial: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataSet {
    pub points: Vec<DataPoint>,
    /// Echo of the generating configuration, if known.
    pub config: Option<ExperimentConfig>,
}

impl DataSet {
    pub fn from_xy(x: &[f64], y: &[f64], stderr: &[f64]) -> Self {
        let points = x
            .iter()
            .zip(y)
            .zip(stderr)
            .map(|((&x, &p), &s)| DataPoint { x, p3_mean: p, p3_stderr: s, n_detected: 0, n_initial: 0 })
            .collect();
        DataSet { points, config: None }
    }

    pub fn xs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.x).collect()
    }

    pub fn ys(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.p3_mean).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x_s,p3_mean,p3_stderr,n_detected,n_initial")?;
        for p in &self.points {
            writeln!(w, "{:?},{:?},{:?},{},{}", p.x, p.p3_mean, p.p3_stderr, p.n_detected, p.n_initial)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        match lines.next() {
            Some((_, Ok(h))) if h.trim() == "x_s,p3_mean,p3_stderr,n_detected,n_initial" => {}
            Some((_, Err(e))) => return Err(e.into()),
            _ => return Err(Error::Parse { line: 1, reason: "expected header x_s,p3_mean,p3_stderr,n_detected,n_initial".into() }),
        }
        let mut points = Vec::new();
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = |what: &str| Error::Parse { line: i + 1, reason: format!("bad {what}") };
            if f.len() != 5 {
                return Err(Error::Parse { line: i + 1, reason: format!("expected 5 fields, found {}", f.len()) });
            }
            let num = |k: usize, what: &str| f[k].parse::<f64>().map_err(|_| bad(what));
            let int = |k: usize, what: &str| f[k].parse::<u64>().map_err(|_| bad(what));
            points.push(DataPoint {
                x: num(0, "x_s")?,
                p3_mean: num(1, "p3_mean")?,
                p3_stderr: num(2, "p3_stderr")?,
                n_detected: int(3, "n_detected")?,
                n_initial: int(4, "n_initial")?,
            });
        }
        Ok(DataSet { points, config: None })
    }

    /// JSON sidecar with the configuration and seed.
    pub fn write_metadata<W: Write>(&self, w: W) -> Result<()> {
        let meta = serde_json::json!({
            "seed": self.config.as_ref().map(|c| c.seed),
            "config": self.config,
            "n_points": self.points.len(),
        });
        serde_json::to_writer_pretty(w, &meta).map_err(|e| Error::Numeric(format!("metadata: {e}")))
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream index reserved for per-shot draws (atom count, noise).
pub const SHOT_STREAM: u64 = u64::MAX;

/// Independent generator for one atom of one shot of one swept point.
pub fn rng_stream(seed: u64, point: u64, shot: u64, atom: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut h = splitmix(seed);
    for (i, chunk) in key.chunks_mut(8).enumerate() {
        h = splitmix(h ^ [point, shot, 0x5eed, i as u64][i].wrapping_mul(0x2545_f491_4f6c_dd1d));
        chunk.copy_from_slice(&h.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(atom);
    rng
}

/// Per-point quantities shared by every shot.
struct PointPlan {
    sequence: PulseSequence,
    /// `(start, end)` of each segment.
    layout: Vec<(f64, f64)>,
    pi_time: Option<f64>,
    tau_pi: Option<f64>,
    /// Probability that the mixing laser scatters a photon.
    p_scatter: f64,
    /// Index of the segment after which the mixing collapse is applied.
    mixing_after: Option<usize>,
}

struct Engine<'a> {
    cfg: &'a ExperimentConfig,
    params: DerivedTrapParams,
    ensemble: EnsembleSpec,
    heating: Option<Arc<HeatingTable>>,
    plans: Vec<PointPlan>,
}

type TableKey = (u64, u64, u64, usize, String);

/// Heating tables are deterministic functions of the trap and transport
/// settings, so sweeps that share them build each one once.
fn cached_heating_table(trap: &TrapConfig, t: &TransportConfig) -> Result<Arc<HeatingTable>> {
    static CACHE: OnceLock<Mutex<HashMap<TableKey, Arc<HeatingTable>>>> = OnceLock::new();
    let key =
        (trap.depth.to_bits(), t.distance.to_bits(), t.move_time.to_bits(), t.n_phases, format!("{:?}", (trap.wavelength, trap.constants)));
    let cache = CACHE.get_or_init(Default::default);
    if let Some(hit) = cache.lock().expect("cache lock").get(&key) {
        return Ok(hit.clone());
    }
    let table = Arc::new(HeatingTable::build(&t.leg()?, trap, 16, t.n_phases, None).map_err(|e| e.context("heating table"))?);
    cache.lock().expect("cache lock").insert(key, table.clone());
    Ok(table)
}

/// Lattice position (m) at time `t` for a sequence with transport legs.
fn lattice_position(plan: &PointPlan, cfg: &ExperimentConfig, t: f64) -> f64 {
    let Some(tc) = &cfg.transport else { return 0.0 };
    let Ok(leg) = tc.leg() else { return 0.0 };
    let mut x = 0.0;
    for (seg, &(s, e)) in plan.sequence.segments.iter().zip(&plan.layout) {
        if let Segment::Transport { profile, .. } = seg {
            if t <= s {
                break;
            }
            let dx = leg.kinematics_at((t - s).min(e - s)).1;
            x += if *profile == 0 { dx } else { -dx };
        }
    }
    x
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let params = derive_trap_params(&cfg.trap)?;
        let ensemble = EnsembleSpec::new(cfg.trap.temperature, cfg.trap.constants.k_b).truncated_at(cfg.trap.depth);
        let heating = match &cfg.transport {
            Some(t) => Some(cached_heating_table(&cfg.trap, t)?),
            None => None,
        };
        let mut plans = Vec::with_capacity(cfg.points.len());
        for &x in &cfg.points {
            let sequence = cfg.sequence_at(x)?;
            let layout = sequence.layout();
            let pi_time = sequence.pi_pulse_time();
            let tau_pi = match cfg.sweep {
                SweepKind::Echo { tau_pi } => Some(tau_pi),
                SweepKind::Ramsey => None,
            };
            let mut plan = PointPlan { sequence, layout, pi_time, tau_pi, p_scatter: 0.0, mixing_after: None };
            if let Some(m) = &cfg.mixing {
                let total = plan.sequence.total_duration();
                let centre = pi_time.unwrap_or(0.5 * total);
                let (a, b) = (centre - 0.5 * m.window_duration, centre + 0.5 * m.window_duration);
                let n = 600;
                let traj: Vec<(f64, f64)> = (0..=n)
                    .map(|i| {
                        let t = a + (b - a) * i as f64 / n as f64;
                        (t, lattice_position(&plan, cfg, t))
                    })
                    .collect();
                plan.p_scatter = scatter_probability(&traj, m);
                // collapse after the last segment that starts before the window centre
                plan.mixing_after = plan.layout.iter().rposition(|&(s, _)| s <= centre);
            }
            plans.push(plan);
        }
        Ok(Engine { cfg, params, ensemble, heating, plans })
    }

    fn atom_count<R: Rng>(&self, rng: &mut R) -> Result<u64> {
        match self.cfg.atom_count {
            AtomCount::Fixed => Ok(self.cfg.atoms_per_shot as u64),
            AtomCount::Poisson => {
                let d = Poisson::new(self.cfg.atoms_per_shot as f64).map_err(|e| Error::Numeric(e.to_string()))?;
                Ok(d.sample(rng) as u64)
            }
        }
    }

    /// Returns `(detected, initial)`.
    fn shot(&self, point: usize, shot: usize) -> Result<(u64, u64)> {
        let cfg = self.cfg;
        let plan = &self.plans[point];
        let mut shot_rng = rng_stream(cfg.seed, point as u64, shot as u64, SHOT_STREAM);
        let n = self.atom_count(&mut shot_rng)?;
        let jump = match (&cfg.noise, plan.tau_pi) {
            (Some(nc), Some(tau)) => {
                let model = VisibilityModel { delta0: self.params.delta0, v0: 1.0, allan: nc.allan.clone(), misalignment: nc.misalignment };
                sample_detuning_jump(model.detuning_sigma(tau)?, &mut shot_rng)?
            }
            _ => 0.0,
        };
        let mut detected = 0;
        for atom in 0..n {
            let mut rng = rng_stream(cfg.seed, point as u64, shot as u64, atom);
            if self.atom(plan, jump, &mut rng)? {
                detected += 1;
            }
        }
        Ok((detected, n))
    }

    /// Whether one atom is detected after push-out.
    fn atom(&self, plan: &PointPlan, jump: f64, rng: &mut ChaCha8Rng) -> Result<bool> {
        let cfg = self.cfg;
        if rng.random::<f64>() >= cfg.transfer_survival {
            return Ok(false);
        }
        if let Some(l) = &cfg.lowering {
            let hot = sample_energy(&EnsembleSpec::new(l.from_temperature, cfg.trap.constants.k_b), rng)?;
            if hot >= l.from_depth || adiabatic_ramp(hot, l.from_depth, cfg.trap.depth)?.1 {
                return Ok(false);
            }
        }
        let pumped = rng.random::<f64>() < cfg.prep_efficiency;
        let mut energy = sample_energy(&self.ensemble, rng)?;

        // energy after each transport segment
        let mut starts = vec![0.0];
        let mut energies = vec![energy];
        if let Some(table) = &self.heating {
            for (seg, &(_, end)) in plan.sequence.segments.iter().zip(&plan.layout) {
                if let Segment::Transport { .. } = seg {
                    let (gain, lost) = table.sample(energy, rng.random::<f64>());
                    if lost {
                        return Ok(false);
                    }
                    energy = (energy + gain).max(0.0);
                    starts.push(end);
                    energies.push(energy);
                }
            }
        }
        if !pumped {
            return Ok(cfg.detection.survives(false, rng));
        }

        let total = plan.sequence.total_duration();
        let mut values: Vec<(f64, f64)> =
            starts.iter().zip(&energies).map(|(&t, &e)| (t, cfg.detuning + lightshift_unchecked(e, &self.params))).collect();
        if let Some(tp) = plan.pi_time {
            if jump != 0.0 {
                // split at the π pulse and add the jump afterwards
                let before = values.iter().rev().find(|v| v.0 <= tp).map(|v| v.1).unwrap_or(values[0].1);
                values.push((tp, before));
                values.sort_by(|a, b| a.0.total_cmp(&b.0));
                for v in values.iter_mut().filter(|v| v.0 >= tp) {
                    v.1 += jump;
                }
            }
        }
        let timeline = PiecewiseDetuning::new(values.iter().map(|v| v.0).collect(), values.iter().map(|v| v.1).collect(), total)?;
        let collapse = match plan.mixing_after {
            Some(_) => rng.random::<f64>() < plan.p_scatter,
            None => false,
        };
        let mut hook = AtomHook { t1: cfg.t1, mixing_after: plan.mixing_after, collapse };
        let outcome = run_sequence_with(&plan.sequence, &timeline, BlochVector::ground(), &mut hook)?;
        let in_f3 = rng.random::<f64>() < outcome.p3.clamp(0.0, 1.0);
        Ok(cfg.detection.survives(in_f3, rng))
    }
}

struct AtomHook {
    t1: Option<f64>,
    mixing_after: Option<usize>,
    collapse: bool,
}

impl SegmentHook for AtomHook {
    fn after_segment(&mut self, index: usize, _: &Segment, start: f64, end: f64, state: &mut BlochVector) {
        *state = relax_t1(*state, end - start, self.t1);
        if self.collapse && self.mixing_after == Some(index) {
            *state = BlochVector::mixed();
        }
    }
}

/// Runs every shot of every swept point. Results depend only on the
/// configuration (including the seed), not on the number of threads.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<DataSet> {
    let engine = Engine::new(cfg)?;
    let shots = cfg.shots_per_point;
    let outcomes: Vec<(u64, u64)> = (0..cfg.points.len() * shots)
        .into_par_iter()
        .map(|i| {
            let (p, s) = (i / shots, i % shots);
            engine.shot(p, s).map_err(|e| e.context(format!("point {p} (x = {:e} s), shot {s}", cfg.points[p])))
        })
        .collect::<Result<Vec<_>>>()?;
    let points = cfg.points.iter().zip(outcomes.chunks(shots)).map(|(&x, chunk)| summarize(x, chunk)).collect();
    Ok(DataSet { points, config: Some(cfg.clone()) })
}

/// Mean of per-shot `P₃` with the standard error across shots, floored at
/// the pooled binomial error so that no point carries zero weight.
fn summarize(x: f64, shots: &[(u64, u64)]) -> DataPoint {
    let used: Vec<f64> = shots.iter().filter(|s| s.1 > 0).map(|&(d, n)| d as f64 / n as f64).collect();
    let n_detected = shots.iter().map(|s| s.0).sum::<u64>();
    let n_initial = shots.iter().map(|s| s.1).sum::<u64>();
    let k = used.len() as f64;
    if used.is_empty() {
        return DataPoint { x, p3_mean: 0.0, p3_stderr: 1.0, n_detected, n_initial };
    }
    let mean = used.iter().sum::<f64>() / k;
    let sem = if used.len() > 1 { (used.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (k - 1.0) / k).sqrt() } else { 0.0 };
    let smoothed = (n_detected as f64 + 1.0) / (n_initial as f64 + 2.0);
    let binomial = (smoothed * (1.0 - smoothed) / n_initial.max(1) as f64).sqrt();
    DataPoint { x, p3_mean: mean, p3_stderr: sem.max(binomial), n_detected, n_initial }
}

/// Copies of `base` with an echo sweep centred on `2τ_π` for each `τ_π`.
pub fn echo_scans(base: &ExperimentConfig, tau_pis: &[f64], half_width: f64, n_points: usize) -> Result<Vec<ExperimentConfig>> {
    if n_points < 2 {
        return Err(Error::validation("n_points", "need at least 2"));
    }
    ensure_positive("half_width", half_width)?;
    tau_pis
        .iter()
        .enumerate()
        .map(|(i, &tau)| {
            let mut c = base.clone();
            c.sweep = SweepKind::Echo { tau_pi: tau };
            c.points = (0..n_points).map(|k| 2.0 * tau - half_width + 2.0 * half_width * k as f64 / (n_points - 1) as f64).collect();
            c.seed = base.seed.wrapping_add(i as u64);
            c.validate()?;
            Ok(c)
        })
        .collect()
}
