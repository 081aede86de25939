//! End-to-end runs of the `nclp` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nclp::harness::parse_config;
use nclp::harness::run::FIXTURES;

const SMALL: &str = r#"
experiment_id = "small"
seed = 11
exponents = [1.0, 2.0]
trials = 10
samples = 20
inputs = 2
n_ext = 20000
double_sequence_len = 10

[bundle]
atoms = ["a", "b"]
measure = [1.0, 0.5]
fibers = [{ dims = [2], trace_weights = [0.5] }, { dims = [1, 1], trace_weights = [1.0, 2.0] }]

[tower]
levels = [{ pattern = "scalars" }, { pattern = "diagonal" }, { pattern = "full" }]
"#;

fn nclp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nclp")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![sub, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    nclp(&args)
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn passing_run_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let out = dir.path().join("out");
    let o = run("run", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let names: Vec<String> = read_dir_sorted(&out).into_iter().map(|(n, _)| n).collect();
    assert_eq!(names, ["axioms.json", "duality.json", "summary.json", "traces.csv"]);
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["experiment_id"], "small");
    assert_eq!(summary["seed"], 11);
    assert_eq!(summary["config_hash"].as_str().unwrap().len(), 64);
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.lines().all(|l| l.starts_with("pass ")));
    let traces = fs::read_to_string(out.join("traces.csv")).unwrap();
    assert_eq!(traces.lines().next().unwrap(), "experiment_id,n,omega,residual_xp,residual_sigma");
}

#[test]
fn subcommands_emit_their_checks() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    for (sub, prefix) in [
        ("check-axioms", "trace."),
        ("check-duality", "duality."),
        ("run-martingale", "martingale."),
    ] {
        let out = dir.path().join(sub);
        let o = run(sub, &cfg, &out, &[]);
        assert_eq!(o.status.code(), Some(0));
        let stdout = String::from_utf8(o.stdout).unwrap();
        assert!(stdout.lines().any(|l| l.contains(prefix)), "{sub}: {stdout}");
    }
}

#[test]
fn runs_are_byte_identical_and_seed_override_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    run("run", &cfg, &a, &[]);
    run("run", &cfg, &b, &[]);
    run("run", &cfg, &c, &["--seed-override", "12"]);
    assert_eq!(read_dir_sorted(&a), read_dir_sorted(&b));
    assert_ne!(read_dir_sorted(&a), read_dir_sorted(&c));
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(c.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 12);
}

#[test]
fn failing_check_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("n_ext = 20000", "n_ext = 5");
    let cfg = write_config(dir.path(), "short.toml", &text);
    let o = run("run-martingale", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.lines().any(|l| l.starts_with("FAIL cesaro.") && l.contains("sup_gap")));
    assert!(dir.path().join("out/summary.json").exists());
}

#[test]
fn broken_tower_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let text = FIXTURES.iter().find(|(n, _)| *n == "broken_tower").unwrap().1;
    let cfg = write_config(dir.path(), "broken.toml", text);
    let o = run("run", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not contained"));
}

#[test]
fn invalid_config_exits_three_with_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("measure = [1.0, 0.5]", "measure = [1.0, -0.5]");
    let cfg = write_config(dir.path(), "bad.toml", &text);
    let o = run("run", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bundle.measure[1]"));

    let text = SMALL.replace("trials = 10", "trials = 10\nbogus = 1");
    let cfg = write_config(dir.path(), "unknown.toml", &text);
    let o = run("run", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn missing_config_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("run", &dir.path().join("absent.toml"), &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn usage_errors_exit_sixty_four() {
    assert_eq!(nclp(&["run"]).status.code(), Some(64));
    assert_eq!(nclp(&["frobnicate"]).status.code(), Some(64));
    assert_eq!(nclp(&["run", "--config", "x", "--out", "y", "--seed-override", "abc"]).status.code(), Some(64));
    assert_eq!(nclp(&["--help"]).status.code(), Some(0));
    assert_eq!(nclp(&["--version"]).status.code(), Some(0));
}

#[test]
fn emit_fixtures_writes_configs_artifacts_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fx");
    let o = nclp(&["emit-fixtures", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for (name, _) in FIXTURES {
        assert!(out.join(format!("{name}.toml")).exists());
    }
    assert!(out.join("mat2_tower/summary.json").exists());
    assert!(out.join("heterogeneous/traces.csv").exists());
    let err = fs::read_to_string(out.join("broken_tower.error")).unwrap();
    assert!(err.starts_with("inconsistency:"));

    // the emitted configs reproduce the emitted artifacts
    let again = dir.path().join("again");
    let o = run("run", &out.join("mat2_tower.toml"), &again, &[]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(read_dir_sorted(&again), read_dir_sorted(&out.join("mat2_tower")));
}

#[test]
fn fixture_configs_round_trip() {
    for (name, text) in FIXTURES {
        let cfg = parse_config(text).unwrap();
        let back = parse_config(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, back, "{name}");
        assert_eq!(cfg.to_toml(), back.to_toml());
        assert_eq!(cfg.hash(), back.hash());
    }
}
