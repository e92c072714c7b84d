//! End-to-end runs of the `porobiot` binary.

use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn porobiot(out: &Path, args: &[&str]) -> i32 {
    let status = Command::new(env!("CARGO_BIN_EXE_porobiot"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("POROBIOT_THREADS", "1")
        .output()
        .expect("binary runs");
    if !status.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&status.stderr));
    }
    status.status.code().expect("exit code")
}

fn data_rows(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count() - 1
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn manufactured_run_writes_errors_trace_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let code = porobiot(dir.path(), &["manufactured", "--case", "linear", "--h", "0.125", "--tau", "0.25", "--levels", "2", "--deterministic"]);
    assert_eq!(code, 0);
    assert_eq!(data_rows(&dir.path().join("errors.csv")), 2);
    assert!(data_rows(&dir.path().join("trace.csv")) >= 4);
    let m = manifest(dir.path());
    assert_eq!(m["command"], "manufactured");
    assert_eq!(m["seconds"], 0.0);
    assert_eq!(m["outputs"].as_array().unwrap().len(), 2);
}

#[test]
fn deterministic_runs_give_identical_outputs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        assert_eq!(porobiot(d.path(), &["manufactured", "--case", "t1c1", "--h", "0.125", "--deterministic"]), 0);
    }
    for f in ["errors.csv", "trace.csv"] {
        assert_eq!(fs::read_to_string(a.path().join(f)).unwrap(), fs::read_to_string(b.path().join(f)).unwrap(), "{f} differs");
    }
    // manifests differ only in the recorded output directory
    let strip = |d: &Path| {
        let mut m = manifest(d);
        m["config"]["output"]["dir"] = Value::Null;
        m
    };
    assert_eq!(strip(a.path()), strip(b.path()));
}

#[test]
fn sweep_writes_every_grid_cell() {
    let dir = tempfile::tempdir().unwrap();
    let code = porobiot(dir.path(), &["sweep", "--scheme", "monolithic", "--case", "t1c1", "--h", "0.125", "--L1", "logspace(-2,2,9)", "--L2", "logspace(-2,2,9)"]);
    assert_eq!(code, 0);
    assert_eq!(data_rows(&dir.path().join("sweep.csv")), 81);
    assert_eq!(manifest(dir.path())["summary"]["cells"], 81);
}

#[test]
fn nonlinear_mandel_series_has_one_row_per_level() {
    let dir = tempfile::tempdir().unwrap();
    let code = porobiot(
        dir.path(),
        &["mandel", "--nonlinear", "t2c3", "--dt", "1", "--steps", "500", "--set", "problem.nx=10", "--set", "problem.ny=4", "--deterministic"],
    );
    assert_eq!(code, 0);
    assert_eq!(data_rows(&dir.path().join("mandel.csv")), 501);
}

#[test]
fn linear_mandel_rises_then_decays() {
    let dir = tempfile::tempdir().unwrap();
    let code = porobiot(dir.path(), &["mandel", "--case", "linear", "--steps", "200", "--set", "problem.nx=20", "--set", "problem.ny=4"]);
    assert_eq!(code, 0);
    let stats = &manifest(dir.path())["summary"]["stats"];
    let p0 = manifest(dir.path())["summary"]["initial_pressure"].as_f64().unwrap();
    assert!(stats["peak"].as_f64().unwrap() > p0, "{stats}");
    assert!(stats["last"].as_f64().unwrap() < p0, "{stats}");
}

#[test]
fn config_file_sits_between_defaults_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[laws]\ncase = \"linear\"\n[problem]\nh = 0.25\ntau = 0.5\n").unwrap();
    let out = dir.path().join("out");
    let code = porobiot(&out, &["manufactured", "--config", cfg.to_str().unwrap(), "--tau", "0.25", "--deterministic"]);
    assert_eq!(code, 0);
    let problem = &manifest(&out)["resolved"]["problem"];
    assert_eq!(problem["n"], 4);
    assert_eq!(problem["tau"], 0.25);
    assert_eq!(problem["case"], "linear");
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(porobiot(dir.path(), &["manufactured", "--set", "problem.bogus=1"]), 2);
    assert_eq!(porobiot(dir.path(), &["manufactured", "--case", "t9c9"]), 2);
    assert_eq!(porobiot(dir.path(), &["manufactured", "--tau", "0.3"]), 2);
    assert_eq!(porobiot(dir.path(), &["no-such-command"]), 2);
}

#[test]
fn unconverged_runs_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let code = porobiot(dir.path(), &["manufactured", "--case", "t1c1", "--h", "0.125", "--set", "scheme.max_iter=2"]);
    assert_eq!(code, 3);
    assert!(manifest(dir.path())["failure"].is_string());
}
