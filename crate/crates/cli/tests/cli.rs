use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn kmespec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kmespec")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(code(&kmespec(&["--help"])), 0);
    assert_eq!(code(&kmespec(&["--version"])), 0);
    assert_eq!(code(&kmespec(&["single", "--help"])), 0);
}

#[test]
fn usage_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let out = path(tmp.path());
    assert_eq!(code(&kmespec(&[])), 1);
    assert_eq!(code(&kmespec(&["frobnicate"])), 1);
    assert_eq!(code(&kmespec(&["single", "--methods", "me,burg", "--out", out])), 1);
    assert_eq!(code(&kmespec(&["single", "-N", "50", "-n", "50", "--out", out])), 1);
    assert_eq!(code(&kmespec(&["montecarlo", "--runs", "0", "--out", out])), 1);
    assert_eq!(code(&kmespec(&["estimate", "--out", out])), 1);

    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"unknown_field": 1}"#).unwrap();
    assert_eq!(code(&kmespec(&["single", "--config", path(&cfg), "--out", out])), 1);
    fs::write(&cfg, r#"{"experiment": "monte_carlo"}"#).unwrap();
    assert_eq!(code(&kmespec(&["single", "--config", path(&cfg), "--out", out])), 1);
}

#[test]
fn data_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "y\n1.0\n2.0\nhello\n").unwrap();
    let res = kmespec(&["estimate", "--input", path(&bad), "--out", path(&out)]);
    assert_eq!(code(&res), 2);
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("line 4"), "{stderr}");

    let empty = tmp.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    assert_eq!(code(&kmespec(&["estimate", "--input", path(&empty), "--out", path(&out)])), 2);

    let short = tmp.path().join("short.csv");
    fs::write(&short, "1\n-1\n2\n").unwrap();
    assert_eq!(code(&kmespec(&["estimate", "--input", path(&short), "--out", path(&out)])), 2);

    let missing = tmp.path().join("missing.csv");
    assert_eq!(code(&kmespec(&["estimate", "--input", path(&missing), "--out", path(&out)])), 2);
}

#[test]
fn excessive_failures_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    // PEM needs N > 2n, so every record fails here while the config is valid.
    let res = kmespec(&[
        "montecarlo", "--methods", "pem-di", "-N", "60", "-n", "40", "--runs", "3", "--grid-size", "64", "--out",
        path(tmp.path()),
    ]);
    assert_eq!(code(&res), 3);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["failed"], 3);
    let records = fs::read_to_string(tmp.path().join("records.csv")).unwrap();
    assert_eq!(records.lines().filter(|l| l.contains("invalid_order")).count(), 3);
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"experiment": "monte_carlo", "methods": ["ME", "ME_DI"], "runs": 5, "grid_size": 64, "N": 300, "n": 20}"#,
    )
    .unwrap();
    let res = kmespec(&["montecarlo", "--config", path(&cfg), "--runs", "2", "--out", path(tmp.path())]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["runs"], 2);
    assert_eq!(summary["records"], 4);
    let methods: Vec<_> = summary["methods"].as_array().unwrap().iter().map(|m| m["method"].clone()).collect();
    assert_eq!(methods, ["ME", "ME_DI"]);
}

#[test]
fn single_writes_expected_files() {
    let tmp = tempfile::tempdir().unwrap();
    let res = kmespec(&[
        "single", "--methods", "me-tc,me", "--seed", "3", "--grid-size", "128", "--timing", "--out",
        path(tmp.path()),
    ]);
    assert_eq!(code(&res), 0);
    let spectra = fs::read_to_string(tmp.path().join("spectra.csv")).unwrap();
    assert_eq!(spectra.lines().next().unwrap(), "theta,truth,ME,ME_TC");
    assert_eq!(spectra.lines().count(), 129);
    let records = fs::read_to_string(tmp.path().join("records.csv")).unwrap();
    assert_eq!(records.lines().count(), 3);
    let timing = fs::read_to_string(tmp.path().join("timing.csv")).unwrap();
    assert_eq!(timing.lines().next().unwrap(), "run,method,wall_time_ms");
}

#[test]
fn estimate_writes_json_and_spectra() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("y.csv");
    let samples: String = (0..400).map(|t| format!("{}\n", ((t * 7919) % 101) as f64 / 50.0 - 1.0)).collect();
    fs::write(&input, samples).unwrap();
    let out = tmp.path().join("out");
    let res = kmespec(&["estimate", "--input", path(&input), "-n", "30", "--methods", "me,me-di", "--out", path(&out)]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("estimates.json")).unwrap()).unwrap();
    assert_eq!(json["samples"], 400);
    let me_di = &json["estimates"][1];
    assert_eq!(me_di["method"], "ME_DI");
    assert_eq!(me_di["result"]["b_hat"].as_array().unwrap().len(), 31);
    assert_eq!(me_di["result"]["min_phase_verified"], true);
    let spectra = fs::read_to_string(out.join("spectra.csv")).unwrap();
    assert_eq!(spectra.lines().next().unwrap(), "theta,ME,ME_DI");
}
