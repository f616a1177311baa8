use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn nonlocal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nonlocal"))
        .args(args)
        .env_remove("NONLOCAL_THREADS")
        .output()
        .expect("binary runs")
}

fn json_of(args: &[&str]) -> Value {
    let out = nonlocal(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

fn num(v: &Value, key: &str) -> f64 {
    v[key].as_f64().unwrap_or_else(|| panic!("no number at {key}: {v}"))
}

#[test]
fn chsh_max_of_mnms2() {
    let v = json_of(&["nonloc", "chsh-max", "--family", "mnms2", "--param", "0.8"]);
    assert!((num(&v, "s_value") - 1.64_f64.sqrt()).abs() < 1e-12);
    let text = String::from_utf8(nonlocal(&["nonloc", "chsh-max", "--family", "mnms2", "--param", "0.8"]).stdout).unwrap();
    assert!(text.contains("\"s_value\": 1.2806248474865698"), "{text}");
}

#[test]
fn classical_three_player_bound() {
    let v = json_of(&["game", "classical", "--n", "3"]);
    assert_eq!(num(&v, "win_probability"), 0.75);
    assert_eq!(v["bipartitions"], 3);
    assert_eq!(v["exact"], "3/4");
}

#[test]
fn curve_csv_spans_domain() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curve.csv");
    let out = nonlocal(&["frontier", "curve", "--family", "mnms3", "--grid", "200", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    let points = nonlocal::frontier::read_csv(&path).unwrap();
    assert_eq!(points.len(), 200);
    assert_eq!(points[0].e_l, 0.0);
    assert!((points[199].e_l - 6.0 / 7.0).abs() < 1e-15);
    assert!(points.windows(2).all(|w| w[0].s >= w[1].s));
}

#[test]
fn raw_convention_scales_s_only() {
    let norm = json_of(&["nonloc", "svet-max", "--family", "ghz", "--starts", "8"]);
    let raw = json_of(&["nonloc", "svet-max", "--family", "ghz", "--starts", "8", "--convention", "raw"]);
    assert!((num(&raw, "s_value") - 4.0 * num(&norm, "s_value")).abs() < 1e-12);
    assert_eq!(num(&raw, "win_probability"), num(&norm, "win_probability"));
    assert_eq!(raw["convention"], "raw");
}

#[test]
fn stochastic_output_is_byte_identical() {
    let args = ["nonloc", "svet-max", "--family", "mnms3", "--param", "0.02", "--starts", "8", "--seed", "11"];
    let a = nonlocal(&args);
    let b = nonlocal(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let v: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["seed"], 11);

    let scan = ["frontier", "scan", "--qubits", "3", "--samples", "6", "--starts", "4", "--seed", "5"];
    let a = nonlocal(&scan);
    let b = nonlocal(&scan);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(String::from_utf8(a.stdout).unwrap().lines().count(), 7);
}

#[test]
fn thread_cap_does_not_change_output() {
    let args = ["frontier", "scan", "--qubits", "2", "--samples", "50", "--seed", "3"];
    let free = nonlocal(&args);
    let capped = Command::new(env!("CARGO_BIN_EXE_nonlocal"))
        .args(args)
        .env("NONLOCAL_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(free.stdout, capped.stdout);

    let bad = Command::new(env!("CARGO_BIN_EXE_nonlocal"))
        .args(args)
        .env("NONLOCAL_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn state_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.json");
    let path_str = path.to_str().unwrap();
    let out = nonlocal(&["state", "make", "--family", "mems", "--param", "0.5", "--out", path_str]);
    assert!(out.status.success());
    assert!(Path::new(&path).exists());

    let from_file = json_of(&["nonloc", "chsh-max", "--state", path_str]);
    let from_family = json_of(&["nonloc", "chsh-max", "--family", "mems", "--param", "0.5"]);
    assert_eq!(from_file["s_value"], from_family["s_value"]);

    let entropy = json_of(&["state", "entropy", "--state", path_str]);
    assert_eq!(entropy["qubits"], 2);
    assert!(num(&entropy, "purity") < 1.0);
}

#[test]
fn settings_file_drives_exact_game() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("settings.json");
    let table = nonlocal::nonlocality::SettingsTable::planar(&[[0.0, 0.0], [0.0, 0.0]]);
    std::fs::write(&path, serde_json::to_string(&table).unwrap()).unwrap();
    let v = json_of(&["game", "exact", "--family", "bell", "--settings", path.to_str().unwrap()]);
    // XX on both questions: win on three of four questions
    assert!((num(&v, "win_probability") - 0.75).abs() < 1e-12);
    assert!((num(&v, "s_value") - 1.0).abs() < 1e-12);
}

#[test]
fn simulate_echoes_seed_and_repeats() {
    let args = ["game", "simulate", "--family", "bell", "--rounds", "20000", "--seed", "9"];
    let a = json_of(&args);
    let b = json_of(&args);
    assert_eq!(a, b);
    assert_eq!(a["seed"], 9);
    assert_eq!(a["rounds"], 20000);
    let sigma = num(&a, "stderr");
    assert!((num(&a, "win_probability") - num(&a, "exact_win_probability")).abs() < 5.0 * sigma);
}

#[test]
fn exit_codes() {
    assert_eq!(nonlocal(&["nonloc", "nope"]).status.code(), Some(2));
    assert_eq!(nonlocal(&["game", "classical", "--n", "3", "--bogus"]).status.code(), Some(2));
    assert_eq!(nonlocal(&["state", "make"]).status.code(), Some(2));
    let domain = nonlocal(&["state", "make", "--family", "mnms3", "--param", "0.5"]);
    assert_eq!(domain.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&domain.stderr).contains("error"));
    assert_eq!(nonlocal(&["nonloc", "visibility", "--family", "mnms2", "--param", "0"]).status.code(), Some(1));
    assert_eq!(nonlocal(&["nonloc", "chsh-max", "--family", "ghz"]).status.code(), Some(1));
}

#[test]
fn verify_all_passes() {
    let out = nonlocal(&["verify", "all"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}");
    assert_eq!(text.lines().filter(|l| l.starts_with("[PASS]")).count(), 11);
}

#[test]
fn scan_config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("scan.json");
    std::fs::write(&config, r#"{"qubits": 2, "samples": 5, "seed": 4}"#).unwrap();
    let config = config.to_str().unwrap();

    let from_file = nonlocal(&["frontier", "scan", "--config", config]);
    let explicit = nonlocal(&["frontier", "scan", "--qubits", "2", "--samples", "5", "--seed", "4"]);
    assert!(from_file.status.success());
    assert_eq!(from_file.stdout, explicit.stdout);

    let fewer = nonlocal(&["frontier", "scan", "--config", config, "--samples", "3"]);
    assert_eq!(String::from_utf8(fewer.stdout).unwrap().lines().count(), 4);
    let reseeded = nonlocal(&["frontier", "scan", "--config", config, "--seed", "0"]);
    assert_ne!(reseeded.stdout, from_file.stdout);
    let summary: Value = serde_json::from_slice(&reseeded.stderr).unwrap();
    assert_eq!(summary["config"]["seed"], 0);
}
