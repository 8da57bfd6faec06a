use std::f64::consts::TAU;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use coherence_cli::scenario::Scenario;
use coherence_cli::svg::curve_samples;
use coherence_core::dephasing::LineshapeForm;
use coherence_core::fit::{FitModel, FitResult};
use coherence_core::shots::DataSet;

fn coherence(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coherence")).args(args).current_dir(dir).env_remove("COHERENCE_OUT_DIR").output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn simulate_is_deterministic_across_threads_and_runs() {
    let d = tempfile::tempdir().unwrap();
    for (out, threads) in [("a", "1"), ("b", "3"), ("c", "3")] {
        let o = coherence(&["simulate", "--preset", "fig1a", "--out", out, "--threads", threads], d.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let a = files(&d.path().join("a"));
    assert!(a.len() >= 2);
    assert_eq!(a, files(&d.path().join("b")));
    assert_eq!(a, files(&d.path().join("c")));
}

#[test]
fn seed_override_changes_data() {
    let d = tempfile::tempdir().unwrap();
    coherence(&["simulate", "--preset", "fig1a", "--out", "a"], d.path());
    coherence(&["simulate", "--preset", "fig1a", "--out", "b", "--seed", "7"], d.path());
    assert_ne!(files(&d.path().join("a")), files(&d.path().join("b")));
}

#[test]
fn out_dir_from_environment() {
    let d = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_coherence"))
        .args(["simulate", "--preset", "fig1a"])
        .current_dir(d.path())
        .env("COHERENCE_OUT_DIR", "from-env")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(d.path().join("from-env/summary.json").exists());
}

#[test]
fn unknown_key_is_config_error_naming_the_key() {
    let d = tempfile::tempdir().unwrap();
    let show = coherence(&["presets", "show", "fig1a"], d.path());
    let text = String::from_utf8(show.stdout).unwrap().replacen("[trap]", "[trap]\nbogus_field = 1", 1);
    fs::write(d.path().join("s.toml"), text).unwrap();
    let o = coherence(&["simulate", "--scenario", "s.toml"], d.path());
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("trap") && e.contains("bogus_field"), "{e}");
}

#[test]
fn scenario_round_trips_through_toml() {
    let d = tempfile::tempdir().unwrap();
    let text = String::from_utf8(coherence(&["presets", "show", "fig3"], d.path()).stdout).unwrap();
    let s = Scenario::from_toml_str(&text).unwrap();
    let again = Scenario::from_toml_str(&s.to_toml_string().unwrap()).unwrap();
    assert_eq!(s, again);
}

#[test]
fn missing_file_is_io_error() {
    let d = tempfile::tempdir().unwrap();
    let o = coherence(&["simulate", "--scenario", "nope.toml"], d.path());
    assert_eq!(o.status.code(), Some(4));
    let o = coherence(&["fit", "--data", "nope.csv", "--model", "ramsey"], d.path());
    assert_eq!(o.status.code(), Some(4));
}

fn write_data(path: &Path, x: &[f64], y: &[f64]) {
    let mut buf = Vec::new();
    DataSet::from_xy(x, y, &vec![0.01; x.len()]).write_csv(&mut buf).unwrap();
    fs::write(path, buf).unwrap();
}

#[test]
fn constant_data_is_numeric_error() {
    let d = tempfile::tempdir().unwrap();
    let x: Vec<f64> = (0..40).map(|i| i as f64 * 1e-4).collect();
    write_data(&d.path().join("flat.csv"), &x, &vec![0.3; 40]);
    let o = coherence(&["fit", "--data", "flat.csv", "--model", "ramsey"], d.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("degenerate"), "{}", stderr(&o));
}

#[test]
fn fit_then_plot_recovers_noiseless_curve() {
    let d = tempfile::tempdir().unwrap();
    let model = FitModel::Ramsey { form: LineshapeForm::Unchirped, chirp: 0.0 };
    let truth = [0.3, 0.31, 0.86e-3, TAU * 2.0e3, 0.2];
    let x: Vec<f64> = (0..76).map(|i| i as f64 * 40e-6).collect();
    let y: Vec<f64> = x.iter().map(|&t| model.eval(&truth, t)).collect();
    write_data(&d.path().join("r.csv"), &x, &y);

    let o = coherence(&["fit", "--data", "r.csv", "--model", "ramsey"], d.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let fit = FitResult::from_json(&fs::read_to_string(d.path().join("r.fit.json")).unwrap()).unwrap();
    for (a, b) in fit.values.iter().zip(truth) {
        assert!((a / b - 1.0).abs() < 1e-6, "{a} vs {b}");
    }

    let o = coherence(&["plot", "--data", "r.csv", "--fit", "r.fit.json"], d.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let svg = fs::read_to_string(d.path().join("r.svg")).unwrap();
    let curve = curve_samples(&svg, "fit").unwrap();
    assert!(curve.len() > 300);
    // pixel coordinates are written to 1e-4 px; the y axis spans < 1 unit over 320 px
    for (x, y) in curve {
        assert!((y - fit.eval(x)).abs() < 1e-5, "{x}: {y} vs {}", fit.eval(x));
    }
}

#[test]
fn allan_of_constant_record_is_zero() {
    let d = tempfile::tempdir().unwrap();
    let mut s = String::from("time_s,amplitude\n");
    for i in 0..200 {
        s += &format!("{:?},1.5\n", i as f64 * 1e-3);
    }
    fs::write(d.path().join("rec.csv"), s).unwrap();
    let o = coherence(&["allan", "--record", "rec.csv", "--out", "a.csv"], d.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = fs::read_to_string(d.path().join("a.csv")).unwrap();
    let rows: Vec<&str> = out.lines().skip(1).collect();
    assert!(rows.len() >= 5);
    assert!(rows.iter().all(|r| r.split(',').nth(1).unwrap().trim().parse::<f64>().unwrap() == 0.0));
}

#[test]
fn transport_writes_report() {
    let d = tempfile::tempdir().unwrap();
    let o = coherence(&["transport", "--phases", "32", "--out", "t"], d.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(d.path().join("t/heating.json").exists() && d.path().join("t/trajectory.csv").exists());
    for bad in [["--distance", "1 furlong"], ["--phases", "8"]] {
        let o = coherence(&["transport", bad[0], bad[1]], d.path());
        assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    }
}

#[test]
fn presets_list_names_everything() {
    let d = tempfile::tempdir().unwrap();
    let out = String::from_utf8(coherence(&["presets", "list"], d.path()).stdout).unwrap();
    for p in coherence_cli::presets::PRESETS {
        assert!(out.contains(p.name));
    }
    assert_eq!(coherence(&["presets", "show", "nope"], d.path()).status.code(), Some(2));
}
