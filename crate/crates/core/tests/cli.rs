mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use adssm::model::ExpModelParams;
use adssm::synth::Trajectory;

fn adssm(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adssm")).args(args).current_dir(cwd).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_scenario(dir: &Path) {
    let spec = common::single_emitter(ExpModelParams { x_inf: -45.0, x_zero: -75.0, tau: 20.0 });
    common::write_json(&dir.join("scenario.json"), &spec);
}

#[test]
fn simulate_writes_its_files() {
    let dir = tempfile::tempdir().unwrap();
    small_scenario(dir.path());
    let o = adssm(&["simulate", "--scenario", "scenario.json", "--out", "sim"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["sweeps.csv", "sweeps.csv.meta.json", "grid.json", "bands.json", "truth.json"] {
        assert!(dir.path().join("sim").join(f).is_file(), "{f} missing");
    }
    let meta = fs::read_to_string(dir.path().join("sim/sweeps.csv.meta.json")).unwrap();
    assert!(meta.contains("\"seed_overridden\": false"));
}

#[test]
fn missing_scenario_exits_2_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = adssm(&["simulate", "--scenario", "nowhere/scenario.json", "--out", "sim"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("nowhere/scenario.json"), "{}", stderr(&o));
}

#[test]
fn seed_override_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    small_scenario(dir.path());
    let o = adssm(&["simulate", "--scenario", "scenario.json", "--out", "sim", "--seed", "99"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("sim/sweeps.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["params"]["seed"], 99);
    assert_eq!(meta["params"]["seed_overridden"], true);
    let truth: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("sim/truth.json")).unwrap()).unwrap();
    assert_eq!(truth["seed"], 99);
}

#[test]
fn stages_chain_through_files() {
    let dir = tempfile::tempdir().unwrap();
    small_scenario(dir.path());
    let p = dir.path();
    assert_eq!(code(&adssm(&["simulate", "--scenario", "scenario.json", "--out", "sim"], p)), 0);
    let o = adssm(&["metrics", "--sweeps", "sim/sweeps.csv", "--bands", "sim/bands.json", "--out", "m"], p);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = fs::read_to_string(p.join("m/metrics.csv")).unwrap().lines().count() - 1;
    assert_eq!(rows, 150, "one band × 150 snapshots");
    let o = adssm(&["bin", "--metrics", "m/metrics.csv", "--delta-h", "10", "--min-count", "3", "--out", "b"], p);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = adssm(&["fit", "--binned", "b/binned.csv", "--out", "f", "--q", "0.2,0.5,0.8"], p);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(p.join("f/reports/lte_band_13_dl_power.json")).unwrap()).unwrap();
    assert_eq!(report["q"], serde_json::json!([0.2, 0.5, 0.8]));
    let table = fs::read_to_string(p.join("f/table.csv")).unwrap();
    let row = table.lines().nth(1).unwrap();
    assert!(row.starts_with("LTE Band 13 DL,-45.00,-75.00,"), "{row}");
}

#[test]
fn empty_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("metrics.csv"), "timestamp_s,altitude_m,band,power_db,entropy_bits,entropy_norm,sparsity\n")
        .unwrap();
    let o = adssm(&["bin", "--metrics", "metrics.csv", "--out", "b"], p);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    fs::write(p.join("binned.csv"), "band,metric,center_m,mean,std,count\n").unwrap();
    let o = adssm(&["fit", "--binned", "binned.csv", "--out", "f"], p);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn too_few_bins_is_not_fitted_but_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(
        p.join("binned.csv"),
        "band,metric,center_m,mean,std,count\nFM,power,5.0,-50.0,0.1,4\nFM,power,15.0,-48.0,0.1,4\n",
    )
    .unwrap();
    let o = adssm(&["fit", "--binned", "binned.csv", "--out", "f"], p);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary = fs::read_to_string(p.join("f/fit_summary.csv")).unwrap();
    assert!(summary.lines().nth(1).unwrap().starts_with("FM,power,,not fitted,"), "{summary}");
    assert!(stderr(&o).contains("not fitted"));
}

#[test]
fn bad_arguments_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&adssm(&["simulate"], dir.path())), 2);
    assert_eq!(code(&adssm(&["fit", "--binned", "x", "--out", "y", "--q", "0.1,0.5"], dir.path())), 2);
    assert_eq!(code(&adssm(&["frobnicate"], dir.path())), 2);
}

#[test]
fn invalid_scenario_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = common::single_emitter(ExpModelParams { x_inf: -45.0, x_zero: -75.0, tau: 20.0 });
    spec.trajectory = Trajectory::Ascent { h_max_m: 10.0, rate_m_s: 0.0, dwell_s: 0.0, interval_s: 1.0 };
    common::write_json(&dir.path().join("scenario.json"), &spec);
    let o = adssm(&["simulate", "--scenario", "scenario.json", "--out", "sim"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("trajectory"), "{}", stderr(&o));
}

#[test]
fn run_all_from_config() {
    let dir = tempfile::tempdir().unwrap();
    small_scenario(dir.path());
    fs::write(
        dir.path().join("run.json"),
        r#"{ "scenario": "scenario.json", "out_dir": "out", "delta_h": 10.0, "min_count": 3 }"#,
    )
    .unwrap();
    let o = adssm(&["run-all", "--config", "run.json"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(dir.path().join("out/fit/table.csv").is_file());
}
