//! End-to-end checks of the `agmf` binary.

use std::path::Path;
use std::process::{Command, Output};

fn agmf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_agmf")).args(args).output().unwrap()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn meta(out: &Path) -> serde_json::Value {
    let path = format!("{}.meta.json", out.display());
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn shape_writes_every_scheme_and_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("shape.csv");
    let dens = dir.path().join("dens.csv");
    let o = agmf(&["shape", "--out", arg(&out), "--density-out", arg(&dens)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "scheme,components,kld_x10");
    assert_eq!(lines.len(), 22);
    for scheme in ["gamma=0.5", "gamma=1", "max-eigenvalue"] {
        assert_eq!(lines.iter().filter(|l| l.starts_with(&format!("{scheme},"))).count(), 7);
    }
    for l in &lines[1..] {
        let kld: f64 = l.rsplit(',').next().unwrap().parse().unwrap();
        assert!(kld.is_finite() && kld >= 0.0);
    }
    let m = meta(&out);
    for key in ["config", "seed", "version", "timestamp"] {
        assert!(m.get(key).is_some(), "missing {key}");
    }
    assert!(m["config"]["xi_split_fraction"]["gamma=0.5"].as_f64().unwrap() > 0.9);
    let dump = std::fs::read_to_string(&dens).unwrap();
    assert!(dump.starts_with("series,components,y,density\ntruth,,"));
}

#[test]
fn track_writes_one_row_per_filter() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("track.csv");
    let o = agmf(&[
        "track", "--out", arg(&out), "--beta", "0.4", "--runs", "2", "--steps", "20", "--seed", "7", "--reduction",
        "8", "--particles", "500",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "filter,beta,reduction,rmse,runtime_s,avg_splits,diverged_runs");
    let filters: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(filters, ["agmf", "mwe", "pf", "ukf"]);
    for l in &lines[1..] {
        let f: Vec<&str> = l.split(',').collect();
        assert_eq!(f[1], "0.4");
        let uses_reduction = f[0] == "agmf" || f[0] == "mwe";
        assert_eq!(f[2], if uses_reduction { "8" } else { "" });
        assert!(f[3].parse::<f64>().unwrap() > 0.0);
    }
    let m = meta(&out);
    assert_eq!(m["seed"], 7);
    assert_eq!(m["config"]["phase_times"].as_array().unwrap().len(), 4);
}

#[test]
fn help_lists_the_default_settings() {
    let o = agmf(&["track", "--help"]);
    assert!(o.status.success());
    let help = String::from_utf8_lossy(&o.stdout);
    for expected in [
        "[default: 0.05]",
        "[default: 128]",
        "[default: 2,8,32]",
        "[default: 50]",
        "[default: 100]",
        "[default: 10000]",
        "[default: agmf,mwe,ukf,pf]",
    ] {
        assert!(help.contains(expected), "missing {expected}");
    }
    let o = agmf(&["shape", "--help"]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("[default: ge4]"));
}

#[test]
fn unwritable_output_fails() {
    let o = agmf(&["shape", "--out", "/nonexistent-dir/x/shape.csv"]);
    assert!(!o.status.success());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn invalid_arguments_exit_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv");
    let cases: [&[&str]; 6] = [
        &["track", "--out", arg(&out), "--reduction", "500"],
        &["track", "--out", arg(&out), "--beta", "1.5"],
        &["track", "--out", arg(&out), "--filters", "kalman"],
        &["track", "--out", arg(&out), "--runs", "0"],
        &["shape", "--out", arg(&out), "--gamma", "2"],
        &["track", "--bogus"],
    ];
    for args in cases {
        let o = agmf(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
    assert!(!out.exists());
}
