//! Scenario files: TOML with one table per module and `[[run]]` entries.
//!
//! Physical quantities are strings with an explicit unit (`"1.0 mK"`,
//! `"2 kHz"`, `"30 ms"`). Unknown keys anywhere are errors.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use coherence_core::allan::{AllanCurve, AllanSource};
use coherence_core::bloch::PulseMode;
use coherence_core::dephasing::LineshapeForm;
use coherence_core::shots::{
    AtomCount, DetectionModel, ExperimentConfig, LoweringConfig, MixingLaserConfig, NoiseConfig, SweepKind, TransportConfig,
};
use coherence_core::trap::{derive_trap_params, TrapConfig, DEFAULT_WAIST};
use coherence_core::units::{PhysConstants, Quantity, Unit};
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// A quantity written as `"<number> <unit>"`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Qty(pub Quantity);

impl Qty {
    pub fn new(value: f64, unit: Unit) -> Self {
        Qty(Quantity::new(value, unit))
    }

    fn si(&self, unit: Unit, key: &str) -> Result<f64> {
        let v = self.0.to(unit, &PhysConstants::default()).map_err(|e| CliError::config(format!("{key}: {e}")))?;
        if !v.is_finite() {
            return Err(CliError::config(format!("{key}: must be finite")));
        }
        Ok(v)
    }
}

impl fmt::Display for Qty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl FromStr for Qty {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        s.parse::<Quantity>().map(Qty).map_err(|e| e.to_string())
    }
}

impl Serialize for Qty {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Qty {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapSection {
    pub depth: Qty,
    pub temperature: Qty,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wavelength: Option<Qty>,
    /// Effective detuning of the trap laser.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detuning: Option<Qty>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waist: Option<Qty>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shots_per_point: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atoms_per_shot: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atom_count: Option<AtomCount>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prep_efficiency: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transfer_survival: Option<f64>,
    /// Detuning from the clock line shifted by the well-bottom light shift;
    /// sets the Ramsey fringe frequency.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fringe_detuning: Option<Qty>,
    /// Detuning from the unperturbed clock line. Excludes `fringe_detuning`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub microwave_detuning: Option<Qty>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulse_mode: Option<PulseMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rabi_frequency: Option<Qty>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t1: Option<Qty>,
}

impl ExperimentSection {
    fn is_empty(&self) -> bool {
        *self == ExperimentSection::default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionSection {
    pub p_survive_f4: f64,
    pub p_survive_f3: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AllanSpec {
    Constant {
        sigma: f64,
    },
    PowerLaw {
        tau_ref: Qty,
        sigma_ref: f64,
        exponent: f64,
    },
    /// `tau_s,sigma_A` table, relative to the scenario file.
    Csv {
        path: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub allan: AllanSpec,
    #[serde(default = "one")]
    pub misalignment: f64,
    /// Misalignment factor of the pessimistic prediction in visibility bands.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worst_case_misalignment: Option<f64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportSection {
    pub distance: Qty,
    pub move_time: Qty,
    pub hold: Qty,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phases: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixingSection {
    pub rate: Qty,
    pub waist: Qty,
    pub window: Qty,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Qty>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoweringSection {
    pub from_depth: Qty,
    pub from_temperature: Qty,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunKind {
    Ramsey,
    Echo,
    /// Echo scans at several `τ_π` reduced to a visibility decay.
    EchoSeries,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitChoice {
    #[default]
    #[serde(alias = "paper")]
    Unchirped,
    Exact,
    None,
}

impl FitChoice {
    pub fn form(self) -> Option<LineshapeForm> {
        match self {
            FitChoice::Unchirped => Some(LineshapeForm::Unchirped),
            FitChoice::Exact => Some(LineshapeForm::Exact),
            FitChoice::None => None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VisibilityMode {
    #[default]
    Fit,
    PeakToPeak,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub id: String,
    pub kind: RunKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Qty>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<Qty>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_pi: Option<Qty>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_pi_values: Option<Vec<Qty>>,
    /// Echo readout window around `2τ_π` when `start`/`stop` are absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_width: Option<Qty>,
    #[serde(default)]
    pub fit: FitChoice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visibility_mode: Option<VisibilityMode>,
    /// Earlier run whose echo fit supplies T₂* and the fringe frequency.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub use_transport: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub use_mixing: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub use_lowering: Option<bool>,
    /// Defaults to true when a `[noise]` table exists.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub use_noise: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<Qty>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<Qty>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fringe_detuning: Option<Qty>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shots_per_point: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub trap: TrapSection,
    #[serde(default, skip_serializing_if = "ExperimentSection::is_empty")]
    pub experiment: ExperimentSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection: Option<DetectionSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transport: Option<TransportSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixing: Option<MixingSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lowering: Option<LoweringSection>,
    #[serde(rename = "run")]
    pub runs: Vec<RunSpec>,
}

/// A run turned into concrete simulator configurations.
#[derive(Clone, Debug, PartialEq)]
pub struct CompiledRun {
    pub spec: RunSpec,
    /// One configuration per scan; echo series carry one per `τ_π`.
    pub configs: Vec<ExperimentConfig>,
    pub tau_pis: Vec<f64>,
    /// Well-bottom light shift of the run's trap, rad/s.
    pub delta0: f64,
    pub noise: Option<NoiseSection>,
    pub allan: Option<AllanSource>,
}

impl Scenario {
    /// Parses TOML; errors name the offending key path.
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(s).map_err(|e| CliError::config(e.to_string()))?;
        let sc: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::config(format!("at `{path}`: {}", e.inner().message().trim()))
        })?;
        if sc.schema_version != SCHEMA_VERSION {
            return Err(CliError::config(format!("schema_version: unsupported version {} (expected {SCHEMA_VERSION})", sc.schema_version)));
        }
        Ok(sc)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Scenario::from_toml_str(&text).map_err(|e| e.context(path.display()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::config(format!("cannot serialize scenario: {e}")))
    }

    /// Checks cross references and builds every run. `base_dir` resolves
    /// relative paths (Allan CSV files).
    pub fn compile(&self, base_dir: Option<&Path>) -> Result<Vec<CompiledRun>> {
        let mut seen = HashSet::new();
        let mut out: Vec<CompiledRun> = Vec::with_capacity(self.runs.len());
        if self.runs.is_empty() {
            return Err(CliError::config("run: scenario defines no runs"));
        }
        let allan = match &self.noise {
            Some(n) => Some(self.allan_source(&n.allan, base_dir)?),
            None => None,
        };
        for (i, run) in self.runs.iter().enumerate() {
            let key = format!("run[{i}]");
            if run.id.is_empty() || !run.id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                return Err(CliError::config(format!("{key}.id: must be non-empty and use [A-Za-z0-9_-]")));
            }
            if !seen.insert(run.id.clone()) {
                return Err(CliError::config(format!("{key}.id: duplicate run id `{}`", run.id)));
            }
            if let Some(r) = &run.reference {
                let target = out
                    .iter()
                    .find(|c| &c.spec.id == r)
                    .ok_or_else(|| CliError::config(format!("{key}.reference: `{r}` is not an earlier run")))?;
                if target.spec.kind == RunKind::Ramsey {
                    return Err(CliError::config(format!("{key}.reference: `{r}` is not an echo run")));
                }
            }
            let compiled = self.compile_run(run, &key, allan.as_ref()).map_err(|e| e.context(format!("run `{}`", run.id)))?;
            out.push(compiled);
        }
        Ok(out)
    }

    fn allan_source(&self, spec: &AllanSpec, base_dir: Option<&Path>) -> Result<AllanSource> {
        Ok(match spec {
            AllanSpec::Constant { sigma } => AllanSource::constant(*sigma),
            AllanSpec::PowerLaw { tau_ref, sigma_ref, exponent } => AllanSource::PowerLaw {
                tau_ref: tau_ref.si(Unit::Second, "noise.allan.tau_ref")?,
                sigma_ref: *sigma_ref,
                exponent: *exponent,
            },
            AllanSpec::Csv { path } => {
                let full = match base_dir {
                    Some(b) if path.is_relative() => b.join(path),
                    _ => path.clone(),
                };
                let f = std::fs::File::open(&full).map_err(|e| CliError::Io(format!("{}: {e}", full.display())))?;
                AllanSource::Curve(
                    AllanCurve::read_csv(std::io::BufReader::new(f))
                        .map_err(|e| CliError::from(e).context(format!("noise.allan.path {}", full.display())))?,
                )
            }
        })
    }

    fn compile_run(&self, run: &RunSpec, key: &str, allan: Option<&AllanSource>) -> Result<CompiledRun> {
        let t = &self.trap;
        let depth = run.depth.as_ref().unwrap_or(&t.depth).si(Unit::Joule, "trap.depth")?;
        let temperature = run.temperature.as_ref().unwrap_or(&t.temperature).si(Unit::Kelvin, "trap.temperature")?;
        let mut trap = TrapConfig::cesium_1064(depth, temperature);
        if let Some(w) = &t.wavelength {
            trap.wavelength = w.si(Unit::Metre, "trap.wavelength")?;
        }
        if let Some(d) = &t.detuning {
            trap.effective_detuning = d.si(Unit::RadPerSecond, "trap.detuning")?;
        }
        trap.waist = match &t.waist {
            Some(w) => w.si(Unit::Metre, "trap.waist")?,
            None => DEFAULT_WAIST,
        };
        let params = derive_trap_params(&trap).map_err(|e| CliError::from(e).context("trap"))?;

        let mut cfg = ExperimentConfig::new(trap, SweepKind::Ramsey, Vec::new());
        let ex = &self.experiment;
        if let Some(v) = ex.shots_per_point {
            cfg.shots_per_point = v;
        }
        if let Some(v) = run.shots_per_point {
            cfg.shots_per_point = v;
        }
        if let Some(v) = ex.atoms_per_shot {
            cfg.atoms_per_shot = v;
        }
        if let Some(v) = ex.atom_count {
            cfg.atom_count = v;
        }
        if let Some(v) = ex.prep_efficiency {
            cfg.prep_efficiency = v;
        }
        if let Some(v) = ex.transfer_survival {
            cfg.transfer_survival = v;
        }
        if let Some(v) = ex.pulse_mode {
            cfg.pulse_mode = v;
        }
        if let Some(v) = &ex.rabi_frequency {
            cfg.rabi_frequency = v.si(Unit::RadPerSecond, "experiment.rabi_frequency")?;
        }
        if let Some(v) = &ex.t1 {
            cfg.t1 = Some(v.si(Unit::Second, "experiment.t1")?);
        }
        cfg.detuning = match (&run.fringe_detuning, &ex.fringe_detuning, &ex.microwave_detuning) {
            (_, Some(_), Some(_)) => {
                return Err(CliError::config("experiment: set either fringe_detuning or microwave_detuning, not both"))
            }
            (Some(f), _, _) => f.si(Unit::RadPerSecond, &format!("{key}.fringe_detuning"))? - params.delta0,
            (None, Some(f), None) => f.si(Unit::RadPerSecond, "experiment.fringe_detuning")? - params.delta0,
            (None, None, Some(m)) => m.si(Unit::RadPerSecond, "experiment.microwave_detuning")?,
            (None, None, None) => -params.delta0,
        };
        if let Some(d) = &self.detection {
            cfg.detection = DetectionModel { p_survive_given_f4: d.p_survive_f4, p_survive_given_f3: d.p_survive_f3 };
        }
        let use_noise = run.use_noise.unwrap_or(true);
        if let (true, Some(n), Some(a)) = (use_noise, &self.noise, allan) {
            cfg.noise = Some(NoiseConfig { allan: a.clone(), misalignment: n.misalignment });
        }
        if run.use_transport.unwrap_or(false) {
            let tr = self
                .transport
                .as_ref()
                .ok_or_else(|| CliError::config(format!("{key}.use_transport: scenario has no [transport] table")))?;
            let mut c = TransportConfig {
                distance: tr.distance.si(Unit::Metre, "transport.distance")?,
                move_time: tr.move_time.si(Unit::Second, "transport.move_time")?,
                hold: tr.hold.si(Unit::Second, "transport.hold")?,
                ..TransportConfig::default()
            };
            if let Some(n) = tr.phases {
                c.n_phases = n;
            }
            cfg.transport = Some(c);
        }
        if run.use_mixing.unwrap_or(false) {
            let m = self.mixing.as_ref().ok_or_else(|| CliError::config(format!("{key}.use_mixing: scenario has no [mixing] table")))?;
            cfg.mixing = Some(MixingLaserConfig {
                scattering_rate_peak: m.rate.si(Unit::PerSecond, "mixing.rate")?,
                waist: m.waist.si(Unit::Metre, "mixing.waist")?,
                window_duration: m.window.si(Unit::Second, "mixing.window")?,
                center_position: match &m.center {
                    Some(c) => c.si(Unit::Metre, "mixing.center")?,
                    None => 0.0,
                },
            });
        }
        if run.use_lowering.unwrap_or(false) {
            let l =
                self.lowering.as_ref().ok_or_else(|| CliError::config(format!("{key}.use_lowering: scenario has no [lowering] table")))?;
            cfg.lowering = Some(LoweringConfig {
                from_depth: l.from_depth.si(Unit::Joule, "lowering.from_depth")?,
                from_temperature: l.from_temperature.si(Unit::Kelvin, "lowering.from_temperature")?,
            });
        }
        cfg.seed = self.seed.wrapping_add(id_hash(&run.id));

        let secs = |q: &Option<Qty>, name: &str| -> Result<Option<f64>> {
            q.as_ref().map(|v| v.si(Unit::Second, &format!("{key}.{name}"))).transpose()
        };
        let (start, stop, half) = (secs(&run.start, "start")?, secs(&run.stop, "stop")?, secs(&run.half_width, "half_width")?);
        let n = run.points.unwrap_or(41);
        let grid = |a: f64, b: f64| -> Result<Vec<f64>> {
            if n < 2 {
                return Err(CliError::config(format!("{key}.points: need at least 2")));
            }
            if b <= a {
                return Err(CliError::config(format!("{key}.stop: must exceed start")));
            }
            Ok((0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect())
        };
        let (configs, tau_pis) = match run.kind {
            RunKind::Ramsey => {
                let (Some(a), Some(b)) = (start, stop) else {
                    return Err(CliError::config(format!("{key}: ramsey runs need start and stop")));
                };
                if cfg.transport.is_some() {
                    return Err(CliError::config(format!("{key}.use_transport: only echo runs can transport")));
                }
                cfg.sweep = SweepKind::Ramsey;
                cfg.points = grid(a, b)?;
                (vec![cfg], Vec::new())
            }
            RunKind::Echo => {
                let tau = secs(&run.tau_pi, "tau_pi")?.ok_or_else(|| CliError::config(format!("{key}.tau_pi: required for echo runs")))?;
                cfg.sweep = SweepKind::Echo { tau_pi: tau };
                cfg.points = match (start, stop, half) {
                    (Some(a), Some(b), _) => grid(a, b)?,
                    (None, None, Some(h)) => grid(2.0 * tau - h, 2.0 * tau + h)?,
                    _ => return Err(CliError::config(format!("{key}: echo runs need start/stop or half_width"))),
                };
                (vec![cfg], vec![tau])
            }
            RunKind::EchoSeries => {
                let taus = run
                    .tau_pi_values
                    .as_ref()
                    .ok_or_else(|| CliError::config(format!("{key}.tau_pi_values: required for echo-series runs")))?
                    .iter()
                    .enumerate()
                    .map(|(j, q)| q.si(Unit::Second, &format!("{key}.tau_pi_values[{j}]")))
                    .collect::<Result<Vec<_>>>()?;
                if taus.len() < 4 {
                    return Err(CliError::config(format!("{key}.tau_pi_values: need at least 4 delays")));
                }
                if taus.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(CliError::config(format!("{key}.tau_pi_values: must be strictly increasing")));
                }
                let h = half.ok_or_else(|| CliError::config(format!("{key}.half_width: required for echo-series runs")))?;
                cfg.sweep = SweepKind::Echo { tau_pi: taus[0] };
                cfg.points = vec![2.0 * taus[0]];
                let scans = coherence_core::shots::echo_scans(&cfg, &taus, h, n).map_err(|e| CliError::from(e).context(key))?;
                (scans, taus)
            }
        };
        for c in &configs {
            c.validate().map_err(|e| CliError::from(e).context(key))?;
        }
        if run.kind == RunKind::Ramsey && run.visibility_mode.is_some() {
            return Err(CliError::config(format!("{key}.visibility_mode: only applies to echo runs")));
        }
        Ok(CompiledRun { spec: run.clone(), configs, tau_pis, delta0: params.delta0, noise: self.noise.clone(), allan: allan.cloned() })
    }
}

/// FNV-1a, so that each run draws from its own seed regardless of order.
fn id_hash(id: &str) -> u64 {
    id.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
name = "minimal"
seed = 7

[trap]
depth = "1.0 mK"
temperature = "0.2 mK"

[[run]]
id = "r"
kind = "ramsey"
start = "0 ms"
stop = "2 ms"
points = 11
"#;

    #[test]
    fn parses_minimal() {
        let s = Scenario::from_toml_str(MINIMAL).unwrap();
        assert_eq!(s.runs.len(), 1);
        let c = s.compile(None).unwrap();
        assert_eq!(c[0].configs[0].points.len(), 11);
        assert!((c[0].configs[0].points[10] - 2e-3).abs() < 1e-15);
        // no fringe detuning: microwave sits on the well-bottom line
        assert_eq!(c[0].configs[0].detuning, -c[0].delta0);
    }

    #[test]
    fn unknown_key_reports_path() {
        let bad = MINIMAL.replace("temperature = \"0.2 mK\"", "temperature = \"0.2 mK\"\ndepht = \"1 mK\"");
        let e = Scenario::from_toml_str(&bad).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("trap"), "{e}");
        assert!(e.to_string().contains("depht"), "{e}");
    }

    #[test]
    fn wrong_dimension_is_config_error() {
        let bad = MINIMAL.replace("\"0.2 mK\"", "\"0.2 ms\"");
        let e = Scenario::from_toml_str(&bad).unwrap().compile(None).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("trap.temperature"), "{e}");
    }

    #[test]
    fn bad_reference_and_version() {
        let bad =
            format!("{MINIMAL}\n[[run]]\nid = \"e\"\nkind = \"echo\"\ntau_pi = \"1 ms\"\nhalf_width = \"0.5 ms\"\nreference = \"nope\"\n");
        assert!(Scenario::from_toml_str(&bad).unwrap().compile(None).unwrap_err().to_string().contains("reference"));
        let v2 = MINIMAL.replace("schema_version = 1", "schema_version = 2");
        assert!(Scenario::from_toml_str(&v2).is_err());
    }

    #[test]
    fn round_trip() {
        let s = Scenario::from_toml_str(MINIMAL).unwrap();
        let again = Scenario::from_toml_str(&s.to_toml_string().unwrap()).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn run_seeds_do_not_depend_on_order() {
        let two = format!("{MINIMAL}\n[[run]]\nid = \"q\"\nkind = \"ramsey\"\nstart = \"0 ms\"\nstop = \"1 ms\"\n");
        let a = Scenario::from_toml_str(&two).unwrap().compile(None).unwrap();
        let mut s = Scenario::from_toml_str(&two).unwrap();
        s.runs.reverse();
        let b = s.compile(None).unwrap();
        assert_eq!(a[0].configs[0].seed, b[1].configs[0].seed);
    }
}
