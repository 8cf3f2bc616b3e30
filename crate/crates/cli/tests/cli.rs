use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CANONICAL: &str = r#"
[model]
lambda = 2.0
alpha = 1.0
k0 = 1.0
a0 = 1.0

[daughter]
kind = "power_law"
nu = 0.0

[initial]
kind = "exponential"
scale = 1.0
mass = 0.2

[grid]
x_min = 1e-3
x_max = 1e3
cells_per_decade = 8

[truncation]
j = 100.0

[solver]
t_end = 1.0
output_stride = 0.25
"#;

fn cofrag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cofrag")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn validate_reports_threshold() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", CANONICAL);
    let json = tmp.path().join("v.json");
    let o = cofrag(&["validate", "--config", &cfg, "--out", json.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    assert!(stdout(&o).contains("rho_star = 3.60673760222"), "{}", stdout(&o));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(json).unwrap()).unwrap();
    assert!((v["rho_star"].as_f64().unwrap() - 0.360_673_760_222_240_8).abs() < 1e-15);
}

#[test]
fn validation_failures_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write_config(tmp.path(), "bad.toml", &CANONICAL.replace("alpha = 1.0", "alpha = 1.5"));
    let o = cofrag(&["validate", "--config", &bad]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("exponent range"));
    let missing = tmp.path().join("nope.toml");
    let o = cofrag(&["validate", "--config", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("I/O error"));
}

#[test]
fn runtime_abort_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &format!("{CANONICAL}max_steps = 5\n"));
    let o = cofrag(&["run", "--config", &cfg, "--out", tmp.path().join("r").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{o:?}");
}

#[test]
fn zero_end_time_writes_one_row() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &CANONICAL.replace("t_end = 1.0", "t_end = 0.0"));
    let out = tmp.path().join("r");
    let o = cofrag(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    let csv = fs::read_to_string(out.join("timeseries.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "t,M_m0,M_m1,M_1,M_lambda,M_2lambda_minus_alpha,log_mass,lyapunov,cum_trunc_loss,dt,steps");
}

#[test]
fn run_is_reproducible_and_checks_pass() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", CANONICAL);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for d in [&a, &b] {
        let o = cofrag(&["run", "--config", &cfg, "--out", d.to_str().unwrap(), "--snapshot-every", "0.25"]);
        assert_eq!(o.status.code(), Some(0), "{o:?}");
    }
    for f in ["timeseries.csv", "summary.json", "config.toml", "snapshots/snap_00004.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let csv = fs::read_to_string(a.join("timeseries.csv")).unwrap();
    let m1: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(3).unwrap().parse().unwrap()).collect();
    assert!(m1.windows(2).all(|w| w[1] <= w[0]));
    assert!(m1.iter().all(|m| (m - 0.2).abs() / 0.2 < 5e-3));

    let o = cofrag(&["check", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("verdict.json")).unwrap()).unwrap();
    assert_eq!(v["pass"], serde_json::Value::Bool(true));
    let names: Vec<&str> = v["checks"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    for n in ["mass_ledger", "lyapunov", "low_moment", "high_moment", "weak_residual", "contraction"] {
        assert!(names.contains(&n), "{names:?}");
    }
}

#[test]
fn check_rejects_corrupt_csv_and_grid_mismatch() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", CANONICAL);
    let a = tmp.path().join("a");
    assert_eq!(cofrag(&["run", "--config", &cfg, "--out", a.to_str().unwrap()]).status.code(), Some(0));
    let other = write_config(tmp.path(), "o.toml", &CANONICAL.replace("cells_per_decade = 8", "cells_per_decade = 9"));
    let b = tmp.path().join("b");
    assert_eq!(cofrag(&["run", "--config", &other, "--out", b.to_str().unwrap()]).status.code(), Some(0));
    let o = cofrag(&["check", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("different grids"));

    let csv = a.join("timeseries.csv");
    let text = fs::read_to_string(&csv).unwrap();
    fs::write(&csv, text.replacen("e0,", "e0,garbage,", 1)).unwrap();
    let o = cofrag(&["check", a.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("parse error"));
}

#[test]
fn failing_check_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", CANONICAL);
    let a = tmp.path().join("a");
    assert_eq!(cofrag(&["run", "--config", &cfg, "--out", a.to_str().unwrap()]).status.code(), Some(0));
    // inflate the recorded mass after the start so the ledger no longer balances
    let csv = a.join("timeseries.csv");
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
    let mut cols: Vec<String> = lines[2].split(',').map(str::to_owned).collect();
    cols[3] = "2.5e-1".into();
    lines[2] = cols.join(",");
    fs::write(&csv, lines.join("\n") + "\n").unwrap();
    let o = cofrag(&["check", a.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}", stdout(&o));
    assert!(stdout(&o).contains("mass_ledger                  FAIL"));
}

#[test]
fn sweeps() {
    let tmp = tempfile::tempdir().unwrap();
    let single = format!("{CANONICAL}\n[experiment]\nkind = \"j_sweep\"\njs = [10.0]\n");
    let cfg = write_config(tmp.path(), "s.toml", &single);
    let out = tmp.path().join("s");
    let o = cofrag(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("verdict.json")).unwrap()).unwrap();
    assert_eq!(v["points"][0]["verdict"], "Inconclusive");

    let empty = write_config(tmp.path(), "e.toml", &format!("{CANONICAL}\n[experiment]\nkind = \"j_sweep\"\njs = []\n"));
    assert_eq!(cofrag(&["sweep", "--config", &empty, "--out", out.to_str().unwrap()]).status.code(), Some(2));

    let rho = format!(
        "{}\n[experiment]\nkind = \"rho_sweep\"\nrhos = [0.2, 2.0]\njs = [10.0, 40.0, 160.0]\n",
        CANONICAL.replace("t_end = 1.0", "t_end = 4.0")
    );
    let cfg = write_config(tmp.path(), "r.toml", &rho);
    let out = tmp.path().join("r");
    let o = cofrag(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap(), "--threads", "3"]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("verdict.json")).unwrap()).unwrap();
    assert_eq!(v["points"][0]["verdict"], "MassConserving", "{v}");
    assert_eq!(v["points"][1]["verdict"], "Gelling", "{v}");
    assert!(out.join("rho_01/j_02/timeseries.csv").exists());
}

#[test]
fn convergence_study_reports_errors_against_finest() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!(
        "{}\n[experiment]\nkind = \"convergence_study\"\ncells_per_decade = [4, 8, 16]\n",
        CANONICAL.replace("t_end = 1.0", "t_end = 0.5")
    );
    let cfg = write_config(tmp.path(), "c.toml", &text);
    let out = tmp.path().join("c");
    let o = cofrag(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap(), "--threads", "2"]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("verdict.json")).unwrap()).unwrap();
    let errs: Vec<f64> = v["points"].as_array().unwrap().iter().map(|p| p["l1_vs_finest"].as_f64().unwrap()).collect();
    assert!(errs[2] < 1e-12, "{errs:?}");
    assert!(errs[0] > errs[1], "{errs:?}");
}
