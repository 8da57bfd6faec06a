//! Executes compiled runs and writes their artifacts.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use coherence_core::allan::AllanSource;
use coherence_core::fit::{
    fit_echo, fit_ramsey, fit_visibility_decay, peak_to_peak_visibility, visibility_band, EchoFitOptions, FitResult, VisibilityBand,
    VisibilityModelKind, VisibilityPoint,
};
use coherence_core::shots::{run_experiment, DataSet, ExperimentConfig, SweepKind};
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::scenario::{CompiledRun, RunKind, Scenario, VisibilityMode};
use crate::svg;

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub id: String,
    pub kind: RunKind,
    pub scans: Vec<DataSet>,
    pub tau_pis: Vec<f64>,
    /// One entry per scan; `None` when fitting was disabled or failed.
    pub fits: Vec<Option<FitResult>>,
    pub visibility: Vec<VisibilityPoint>,
    pub visibility_fit: Option<FitResult>,
    pub band: Option<VisibilityBand>,
    pub warnings: Vec<String>,
}

impl RunOutcome {
    pub fn t2_star(&self) -> Option<f64> {
        self.fits.first()?.as_ref()?.get("T2_star")
    }

    /// `offset + amplitude` of the first fit.
    pub fn max_p3(&self) -> Option<f64> {
        let f = self.fits.first()?.as_ref()?;
        Some(f.get("offset")? + f.get("amplitude")?)
    }

    pub fn decay_time(&self) -> Option<f64> {
        self.visibility_fit.as_ref()?.decay_time
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioReport {
    pub name: String,
    pub runs: Vec<RunOutcome>,
}

impl ScenarioReport {
    pub fn run(&self, id: &str) -> Option<&RunOutcome> {
        self.runs.iter().find(|r| r.id == id)
    }
}

/// P₃ floor of atoms transferred but never in the superposition: they are
/// pushed out with the F=4 survival probability.
pub fn echo_background(cfg: &ExperimentConfig) -> f64 {
    cfg.transfer_survival * cfg.detection.p_survive_given_f4
}

/// Runs every scan of the scenario. With `threads = Some(n)` the work runs
/// in a private pool of `n` threads; results do not depend on `n`.
pub fn run_scenario(scenario: &Scenario, base_dir: Option<&Path>, threads: Option<usize>) -> Result<ScenarioReport> {
    let compiled = scenario.compile(base_dir)?;
    let go = || -> Result<ScenarioReport> {
        let mut runs: Vec<RunOutcome> = Vec::with_capacity(compiled.len());
        for c in &compiled {
            let reference = c.spec.reference.as_ref().and_then(|r| runs.iter().find(|o| &o.id == r));
            let out = execute(c, reference).map_err(|e| e.context(format!("run `{}`", c.spec.id)))?;
            runs.push(out);
        }
        Ok(ScenarioReport { name: scenario.name.clone(), runs })
    };
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| CliError::config(format!("threads: {e}")))?
            .install(go),
        None => go(),
    }
}

/// Echo-fit options holding T₂* and the fringe frequency from `fit`.
fn held_from(fit: &FitResult, background: f64, centre: f64) -> EchoFitOptions {
    EchoFitOptions { background, t2_star: fit.get("T2_star"), fringe_frequency: fit.get("fringe_frequency"), center: Some(centre) }
}

fn execute(c: &CompiledRun, reference: Option<&RunOutcome>) -> Result<RunOutcome> {
    let mut warnings = Vec::new();
    let scans = c.configs.iter().map(run_experiment).collect::<coherence_core::Result<Vec<_>>>()?;
    let form = c.spec.fit.form();
    let mut out = RunOutcome {
        id: c.spec.id.clone(),
        kind: c.spec.kind,
        scans,
        tau_pis: c.tau_pis.clone(),
        fits: Vec::new(),
        visibility: Vec::new(),
        visibility_fit: None,
        band: None,
        warnings: Vec::new(),
    };
    let mut note = |w: String| warnings.push(w);
    match c.spec.kind {
        RunKind::Ramsey => {
            let fit = form.and_then(|f| match fit_ramsey(&out.scans[0], f) {
                Ok(r) => Some(r),
                Err(e) => {
                    note(format!("ramsey fit failed: {e}"));
                    None
                }
            });
            out.fits.push(fit);
        }
        RunKind::Echo | RunKind::EchoSeries => {
            let mode = c.spec.visibility_mode.unwrap_or_default();
            let mut held: Option<FitResult> = reference.and_then(|r| r.fits.first().cloned().flatten());
            for (k, (scan, cfg)) in out.scans.iter().zip(&c.configs).enumerate() {
                let tau = match cfg.sweep {
                    SweepKind::Echo { tau_pi } => tau_pi,
                    SweepKind::Ramsey => unreachable!("echo run compiled to ramsey sweep"),
                };
                let bg = echo_background(cfg);
                let fit = form.and_then(|f| {
                    let opts = match &held {
                        Some(h) => held_from(h, bg, 2.0 * tau),
                        None => EchoFitOptions { background: bg, ..Default::default() },
                    };
                    match fit_echo(scan, tau, f, &opts) {
                        Ok(r) => Some(r),
                        Err(e) => {
                            note(format!("echo fit at tau_pi = {tau:e} s failed: {e}"));
                            None
                        }
                    }
                });
                if k == 0 && held.is_none() {
                    held = fit.clone();
                }
                let vis = match mode {
                    VisibilityMode::Fit => fit.as_ref().and_then(|f| f.visibility),
                    VisibilityMode::PeakToPeak => match peak_to_peak_visibility(scan, bg) {
                        Ok(v) => Some((v, peak_to_peak_error(scan, bg, v))),
                        Err(e) => {
                            note(format!("peak-to-peak visibility at tau_pi = {tau:e} s: {e}"));
                            None
                        }
                    },
                };
                if let Some((v, e)) = vis {
                    out.visibility.push(VisibilityPoint { tau_pi: tau, visibility: v, error: e });
                }
                out.fits.push(fit);
            }
            if c.spec.kind == RunKind::EchoSeries {
                if out.visibility.len() >= 4 {
                    match fit_visibility_decay(&out.visibility, VisibilityModelKind::GaussianSigma) {
                        Ok(r) => out.visibility_fit = Some(r),
                        Err(e) => note(format!("visibility decay fit failed: {e}")),
                    }
                } else {
                    note(format!("only {} visibilities extracted; decay not fitted", out.visibility.len()));
                }
                out.band = band(c, out.visibility_fit.as_ref())?;
            }
        }
    }
    out.warnings = warnings;
    Ok(out)
}

/// First-order error of `(h − l)/(h + l − 2b)` with the mean point error
/// on both extremes.
fn peak_to_peak_error(scan: &DataSet, bg: f64, v: f64) -> f64 {
    let (lo, hi) = scan.ys().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, &y| (a.0.min(y), a.1.max(y)));
    let sigma = scan.points.iter().map(|p| p.p3_stderr).sum::<f64>() / scan.points.len() as f64;
    sigma * (2.0 + 2.0 * v * v).sqrt() / (hi + lo - 2.0 * bg)
}

fn scale(a: &AllanSource, f: f64) -> AllanSource {
    match a {
        AllanSource::Curve(c) => AllanSource::Curve(c.scaled(f)),
        AllanSource::PowerLaw { tau_ref, sigma_ref, exponent } => {
            AllanSource::PowerLaw { tau_ref: *tau_ref, sigma_ref: sigma_ref * f, exponent: *exponent }
        }
    }
}

/// Best/worst-case visibility predictions when a worst-case misalignment
/// is configured.
fn band(c: &CompiledRun, fit: Option<&FitResult>) -> Result<Option<VisibilityBand>> {
    let (Some(noise), Some(allan)) = (&c.noise, &c.allan) else {
        return Ok(None);
    };
    let Some(worst) = noise.worst_case_misalignment else {
        return Ok(None);
    };
    // fitted V₀ can overshoot 1 by noise; the prediction model cannot
    let v0 = fit.and_then(|f| f.get("V0")).unwrap_or(1.0).clamp(0.0, 1.0);
    let tmax = c.tau_pis.last().copied().unwrap_or(0.0) * 1.2;
    let taus: Vec<f64> = (1..=100).map(|i| tmax * i as f64 / 100.0).collect();
    Ok(Some(visibility_band(&scale(allan, noise.misalignment), &scale(allan, worst), c.delta0, v0, &taus)?))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn io_ctx<T>(r: std::io::Result<T>, path: &Path) -> Result<T> {
    r.map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn write_visibility_csv<W: Write>(points: &[VisibilityPoint], mut w: W) -> std::io::Result<()> {
    writeln!(w, "tau_pi_s,visibility,error")?;
    for p in points {
        writeln!(w, "{:?},{:?},{:?}", p.tau_pi, p.visibility, p.error)?;
    }
    Ok(())
}

pub fn read_visibility_csv(text: &str) -> Result<Vec<VisibilityPoint>> {
    let mut lines = text.lines();
    if lines.next().map(|h| h.split(',').map(str::trim).collect::<Vec<_>>()) != Some(vec!["tau_pi_s", "visibility", "error"]) {
        return Err(CliError::config("expected header `tau_pi_s,visibility,error`"));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let v: Vec<f64> = l
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| CliError::config(format!("line {}: {e}", i + 2)))?;
            if v.len() != 3 {
                return Err(CliError::config(format!("line {}: expected 3 columns", i + 2)));
            }
            Ok(VisibilityPoint { tau_pi: v[0], visibility: v[1], error: v[2] })
        })
        .collect()
}

fn write_band_csv<W: Write>(b: &VisibilityBand, mut w: W) -> std::io::Result<()> {
    writeln!(w, "tau_pi_s,upper,lower")?;
    for ((t, u), l) in b.taus.iter().zip(&b.upper).zip(&b.lower) {
        writeln!(w, "{t:?},{u:?},{l:?}")?;
    }
    Ok(())
}

#[derive(Serialize)]
struct RunSummary<'a> {
    id: &'a str,
    kind: RunKind,
    t2_star_s: Option<f64>,
    max_p3: Option<f64>,
    visibilities: Vec<(f64, f64, f64)>,
    decay_time_s: Option<f64>,
    warnings: &'a [String],
}

/// Writes CSV, metadata, fit JSON and SVG for every run, plus
/// `summary.json`. Returns the written paths.
pub fn write_outputs(report: &ScenarioReport, dir: &Path) -> Result<Vec<PathBuf>> {
    io_ctx(std::fs::create_dir_all(dir), dir)?;
    let mut written = Vec::new();
    let mut put = |name: String, f: &mut dyn FnMut(&mut BufWriter<File>) -> Result<()>| -> Result<()> {
        let path = dir.join(name);
        let mut w = create(&path)?;
        f(&mut w)?;
        io_ctx(w.flush(), &path)?;
        written.push(path);
        Ok(())
    };
    for run in &report.runs {
        let single = run.scans.len() == 1;
        for (k, (scan, fit)) in run.scans.iter().zip(&run.fits).enumerate() {
            let stem = if single { run.id.clone() } else { format!("{}.scan{k}", run.id) };
            put(format!("{stem}.csv"), &mut |w| Ok(scan.write_csv(w)?))?;
            put(format!("{stem}.meta.json"), &mut |w| Ok(scan.write_metadata(w)?))?;
            if let Some(f) = fit {
                put(format!("{stem}.fit.json"), &mut |w| Ok(writeln!(w, "{}", f.to_json())?))?;
            }
            put(format!("{stem}.svg"), &mut |w| Ok(w.write_all(svg::scan_plot(&stem, scan, fit.as_ref()).as_bytes())?))?;
        }
        if run.kind == RunKind::EchoSeries {
            put(format!("{}.visibility.csv", run.id), &mut |w| Ok(write_visibility_csv(&run.visibility, w)?))?;
            if let Some(f) = &run.visibility_fit {
                put(format!("{}.visibility.fit.json", run.id), &mut |w| Ok(writeln!(w, "{}", f.to_json())?))?;
            }
            if let Some(b) = &run.band {
                put(format!("{}.band.csv", run.id), &mut |w| Ok(write_band_csv(b, w)?))?;
            }
            put(format!("{}.visibility.svg", run.id), &mut |w| {
                Ok(w.write_all(svg::visibility_plot(&run.id, &run.visibility, run.visibility_fit.as_ref(), run.band.as_ref()).as_bytes())?)
            })?;
        }
    }
    let summaries: Vec<RunSummary> = report
        .runs
        .iter()
        .map(|r| RunSummary {
            id: &r.id,
            kind: r.kind,
            t2_star_s: if r.kind == RunKind::Ramsey { r.t2_star() } else { None },
            max_p3: if r.kind == RunKind::Ramsey { r.max_p3() } else { None },
            visibilities: r.visibility.iter().map(|v| (v.tau_pi, v.visibility, v.error)).collect(),
            decay_time_s: r.decay_time(),
            warnings: &r.warnings,
        })
        .collect();
    put("summary.json".into(), &mut |w| {
        serde_json::to_writer_pretty(&mut *w, &serde_json::json!({ "scenario": report.name, "runs": summaries }))
            .map_err(|e| CliError::Io(e.to_string()))?;
        Ok(writeln!(w)?)
    })?;
    Ok(written)
}
