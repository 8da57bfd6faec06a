//! Subcommand bodies, independent of argument parsing.

use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use coherence_core::allan::{allan_deviation, AllanCurve, NoiseRecord};
use coherence_core::dephasing::LineshapeForm;
use coherence_core::fit::{fit_echo, fit_ramsey, fit_visibility_decay, EchoFitOptions, FitResult, VisibilityModelKind};
use coherence_core::shots::DataSet;
use coherence_core::transport::{heating_stats, integrate_trajectory, make_accel_profile, orbit_phase_states, Lattice, ProfileKind};
use coherence_core::trap::TrapConfig;
use coherence_core::units::Unit;
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::runner::{read_visibility_csv, run_scenario, write_outputs, ScenarioReport};
use crate::scenario::{Qty, Scenario};
use crate::{presets, svg};

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn si(q: &Qty, unit: Unit, flag: &str) -> Result<f64> {
    q.0.to(unit, &Default::default()).map_err(|e| CliError::config(format!("{flag}: {e}")))
}

#[derive(Clone, Debug, Default)]
pub struct SimulateArgs {
    pub scenario: Option<PathBuf>,
    pub preset: Option<String>,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub threads: Option<usize>,
}

/// Loads a scenario file or preset, runs it and writes all outputs.
pub fn simulate(args: &SimulateArgs) -> Result<ScenarioReport> {
    let (mut scenario, base) = match (&args.scenario, &args.preset) {
        (Some(p), None) => (Scenario::from_file(p)?, p.parent().map(Path::to_path_buf)),
        (None, Some(name)) => (presets::find(name)?.scenario()?, None),
        _ => return Err(CliError::config("give exactly one of --scenario and --preset")),
    };
    if let Some(s) = args.seed {
        scenario.seed = s;
    }
    let report = run_scenario(&scenario, base.as_deref(), args.threads)?;
    write_outputs(&report, &args.out)?;
    Ok(report)
}

/// One line per run for the terminal.
pub fn report_lines(report: &ScenarioReport) -> Vec<String> {
    report
        .runs
        .iter()
        .map(|r| {
            let mut s = format!("{}: {} scan(s)", r.id, r.scans.len());
            if let (Some(t2), Some(p)) = (r.t2_star(), r.max_p3()) {
                if r.kind == crate::scenario::RunKind::Ramsey {
                    s += &format!(", T2* = {:.3} ms, max P3 = {:.3}", t2 * 1e3, p);
                }
            }
            if r.kind == crate::scenario::RunKind::Echo {
                if let Some(v) = r.visibility.first() {
                    s += &format!(", visibility = {:.3} ± {:.3}", v.visibility, v.error);
                }
            }
            if let Some(d) = r.decay_time() {
                s += &format!(", visibility decay time = {:.1} ms", d * 1e3);
            }
            for w in &r.warnings {
                s += &format!("\n  warning: {w}");
            }
            s
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitKind {
    Ramsey,
    Echo,
    Visibility,
}

#[derive(Clone, Debug)]
pub struct FitArgs {
    pub data: PathBuf,
    pub model: FitKind,
    pub form: LineshapeForm,
    pub tau_pi: Option<Qty>,
    pub background: f64,
    /// Hold T₂* fixed in echo fits.
    pub t2_star: Option<Qty>,
    /// Hold the fringe frequency fixed in echo fits.
    pub fringe_frequency: Option<Qty>,
    pub out: Option<PathBuf>,
}

/// Fits a CSV file and writes the result next to it (or to `out`).
/// Unconverged fits are numeric errors.
pub fn fit(args: &FitArgs) -> Result<(FitResult, PathBuf)> {
    let text = read(&args.data)?;
    let result = match args.model {
        FitKind::Ramsey => fit_ramsey(&parse_dataset(&text, &args.data)?, args.form)?,
        FitKind::Echo => {
            let tau = args.tau_pi.as_ref().ok_or_else(|| CliError::config("--tau-pi is required for echo fits"))?;
            let opts = EchoFitOptions {
                background: args.background,
                t2_star: args.t2_star.as_ref().map(|q| si(q, Unit::Second, "--t2-star")).transpose()?,
                fringe_frequency: args.fringe_frequency.as_ref().map(|q| si(q, Unit::RadPerSecond, "--fringe-frequency")).transpose()?,
                center: None,
            };
            fit_echo(&parse_dataset(&text, &args.data)?, si(tau, Unit::Second, "--tau-pi")?, args.form, &opts)?
        }
        FitKind::Visibility => {
            let pts = read_visibility_csv(&text).map_err(|e| e.context(args.data.display()))?;
            fit_visibility_decay(&pts, VisibilityModelKind::GaussianSigma)?
        }
    };
    if !result.converged {
        return Err(CliError::Numeric(format!(
            "fit did not converge after {} iterations (optimality {:.2e}, residual norm {:.3e}); last parameters: {}",
            result.iterations,
            result.optimality,
            result.residual_norm,
            result.summary()
        )));
    }
    let out = args.out.clone().unwrap_or_else(|| args.data.with_extension("fit.json"));
    write(&out, (result.to_json() + "\n").as_bytes())?;
    Ok((result, out))
}

fn parse_dataset(text: &str, path: &Path) -> Result<DataSet> {
    DataSet::read_csv(BufReader::new(text.as_bytes())).map_err(|e| CliError::from(e).context(path.display()))
}

/// Averaging times from two samples up to a third of the record, in
/// factor-of-two steps.
pub fn octave_taus(record: &NoiseRecord) -> Vec<f64> {
    let mut taus = Vec::new();
    let mut m = 1usize;
    while (3 * m) <= record.samples.len() {
        taus.push(m as f64 * record.sample_period);
        m *= 2;
    }
    taus
}

/// Allan deviation of a `time_s,amplitude` record; writes `tau_s,sigma_A`.
pub fn allan(record: &Path, taus: &[Qty], out: &Path) -> Result<AllanCurve> {
    let f = fs::File::open(record).map_err(|e| CliError::Io(format!("{}: {e}", record.display())))?;
    let rec = NoiseRecord::read_csv(BufReader::new(f)).map_err(|e| CliError::from(e).context(record.display()))?;
    let taus: Vec<f64> =
        if taus.is_empty() { octave_taus(&rec) } else { taus.iter().map(|q| si(q, Unit::Second, "--tau")).collect::<Result<_>>()? };
    if taus.is_empty() {
        return Err(CliError::config("record too short for any averaging time"));
    }
    let sig = taus.iter().map(|&t| allan_deviation(&rec, t)).collect::<coherence_core::Result<Vec<_>>>()?;
    let curve = AllanCurve::new(taus, sig)?;
    let mut buf = Vec::new();
    curve.write_csv(&mut buf)?;
    write(out, &buf)?;
    Ok(curve)
}

#[derive(Clone, Debug)]
pub struct TransportArgs {
    pub distance: Qty,
    pub move_time: Qty,
    pub hold: Qty,
    pub depth: Qty,
    /// Initial energy as a fraction of the depth.
    pub energy: f64,
    pub phases: usize,
    pub dt: Option<Qty>,
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HeatingReport {
    pub depth_j: f64,
    pub distance_m: f64,
    pub move_time_s: f64,
    pub hold_s: f64,
    pub acceleration_mps2: f64,
    pub initial_energy_over_u0: f64,
    pub phases: usize,
    pub dt_s: f64,
    pub max_gain_over_u0: f64,
    pub mean_gain_over_u0: f64,
    pub escaped: usize,
    pub gains_over_u0: Vec<f64>,
}

/// Round-trip heating over a ring of initial phases; writes
/// `heating.json` and the trajectory of the worst phase.
pub fn transport(args: &TransportArgs) -> Result<HeatingReport> {
    let depth = si(&args.depth, Unit::Joule, "--depth")?;
    let d = si(&args.distance, Unit::Metre, "--distance")?;
    let t = si(&args.move_time, Unit::Second, "--move-time")?;
    let hold = si(&args.hold, Unit::Second, "--hold")?;
    if !(0.0..1.0).contains(&args.energy) {
        return Err(CliError::config("--energy: must lie in [0, 1)"));
    }
    let trap = TrapConfig::cesium_1064(depth, 1e-6);
    let lattice = Lattice::from_trap(&trap)?;
    let dt = match &args.dt {
        Some(q) => si(q, Unit::Second, "--dt")?,
        None => lattice.default_dt(),
    };
    let profile = make_accel_profile(d, t, ProfileKind::RoundTrip { hold })?;
    let e0 = args.energy * depth;
    let stats = heating_stats(e0, args.phases, &profile, &trap, dt)?;
    let worst = stats.gains.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap_or(0);
    let start = orbit_phase_states(e0, args.phases, &lattice, dt)?[worst];
    let traj = integrate_trajectory(&start, &profile, &trap, dt, Some(5))?;
    let report = HeatingReport {
        depth_j: depth,
        distance_m: d,
        move_time_s: t,
        hold_s: hold,
        acceleration_mps2: 4.0 * d / (t * t),
        initial_energy_over_u0: args.energy,
        phases: args.phases,
        dt_s: dt,
        max_gain_over_u0: stats.max_gain / depth,
        mean_gain_over_u0: stats.mean_gain / depth,
        escaped: stats.escaped.iter().filter(|e| **e).count(),
        gains_over_u0: stats.gains.iter().map(|g| g / depth).collect(),
    };
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Io(e.to_string()))?;
    write(&args.out.join("heating.json"), (json + "\n").as_bytes())?;
    let mut buf = Vec::new();
    traj.write_csv(&mut buf)?;
    write(&args.out.join("trajectory.csv"), &buf)?;
    Ok(report)
}

/// Renders a scan or visibility CSV, with an optional fit, to SVG.
pub fn plot(data: &Path, fit: Option<&Path>, band: Option<&Path>, out: Option<&Path>) -> Result<PathBuf> {
    let text = read(data)?;
    let fit =
        fit.map(|p| read(p).and_then(|s| FitResult::from_json(&s).map_err(|e| CliError::from(e).context(p.display())))).transpose()?;
    let title = data.file_stem().and_then(|s| s.to_str()).unwrap_or("data");
    let svg = if text.starts_with("tau_pi_s,visibility") {
        let pts = read_visibility_csv(&text).map_err(|e| e.context(data.display()))?;
        let band = band.map(|p| read(p).and_then(|s| parse_band(&s).map_err(|e| e.context(p.display())))).transpose()?;
        svg::visibility_plot(title, &pts, fit.as_ref(), band.as_ref())
    } else {
        svg::scan_plot(title, &parse_dataset(&text, data)?, fit.as_ref())
    };
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| data.with_extension("svg"));
    write(&out, svg.as_bytes())?;
    Ok(out)
}

fn parse_band(text: &str) -> Result<coherence_core::fit::VisibilityBand> {
    let mut b = coherence_core::fit::VisibilityBand { taus: vec![], upper: vec![], lower: vec![] };
    for (i, line) in text.lines().enumerate().skip(1).filter(|(_, l)| !l.trim().is_empty()) {
        let v: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| CliError::config(format!("line {}: {e}", i + 1)))?;
        if v.len() != 3 {
            return Err(CliError::config(format!("line {}: expected 3 columns", i + 1)));
        }
        b.taus.push(v[0]);
        b.upper.push(v[1]);
        b.lower.push(v[2]);
    }
    Ok(b)
}

pub fn presets_list<W: Write>(mut w: W) -> Result<()> {
    for p in presets::PRESETS {
        writeln!(w, "{:<7} {}", p.name, p.description())?;
    }
    Ok(())
}
