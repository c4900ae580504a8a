use std::path::Path;
use std::process::{Command, Output};

fn mfbsde(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mfbsde"));
    cmd.args(args).env_remove("MFBSDE_TOL_OVERRIDE").env_remove("MFBSDE_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn value(csv: &str, metric: &str) -> f64 {
    csv.lines()
        .map(|l| l.split(',').collect::<Vec<_>>())
        .find(|f| f.len() == 5 && f[1] == metric)
        .unwrap_or_else(|| panic!("no row {metric}"))[2]
        .parse()
        .unwrap()
}

#[test]
fn bounds_rows_match_closed_forms() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "b.json", r#"{"profile": {"k1": 1, "k2": 0.5, "gamma": 1}}"#);
    let out = mfbsde(&["bounds", "--config", &cfg], &[]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let e2 = 2f64.exp();
    assert_eq!(value(&text, "L1"), 3.0);
    assert!((value(&text, "L2") - (2.0 * e2 + 2.0 * 6f64.exp())).abs() < 1e-9);
    assert!((value(&text, "M2_tilde") - 2.0 * e2).abs() < 1e-12);
}

#[test]
fn fixed_seed_is_byte_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "p.json",
        r#"{"driver": "mean-plus-y", "terminal": "tanh", "n_paths": 512, "n_steps": 20}"#,
    );
    let a = mfbsde(&["picard", "--config", &cfg, "--seed", "9"], &[("MFBSDE_THREADS", "1")]);
    let b = mfbsde(&["picard", "--config", &cfg, "--seed", "9"], &[]);
    let c = mfbsde(&["picard", "--config", &cfg, "--seed", "9"], &[("MFBSDE_THREADS", "3")]);
    assert_eq!(a.status.code(), Some(0));
    assert!(!a.stdout.is_empty());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
    let d = mfbsde(&["picard", "--config", &cfg, "--seed", "10"], &[]);
    assert_ne!(a.stdout, d.stdout);
}

#[test]
fn out_flag_writes_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    let out = mfbsde(&["brownian-check", "--out", path.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(path).unwrap();
    assert!(text.starts_with("experiment,metric,value,tolerance,pass\n"));
}

#[test]
fn config_errors_exit_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let bad_key = write(dir.path(), "a.json", r#"{"foo": 1}"#);
    let out = mfbsde(&["solve", "--config", &bad_key], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("foo"));

    let neg = write(dir.path(), "b.json", r#"{"n_paths": -5}"#);
    let out = mfbsde(&["solve", "--config", &neg], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_paths"));

    let out = mfbsde(&["solve", "--config", "/nonexistent/x.json"], &[]);
    assert_eq!(out.status.code(), Some(2));

    let out = mfbsde(&["no-such-command"], &[]);
    assert_eq!(out.status.code(), Some(2));

    let out = mfbsde(&["bounds"], &[("MFBSDE_THREADS", "zero")]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn divergence_exits_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "d.json", r#"{"forward": {"x0": 1, "b_x": 1e200}, "n_paths": 64, "n_steps": 10}"#);
    let out = mfbsde(&["forward", "--config", &cfg], &[]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unconverged_picard_is_a_criterion_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "u.json",
        r#"{"driver": "linear-mean", "n_paths": 256, "n_steps": 10, "picard": {"max_iter": 2, "tol": 1e-12}}"#,
    );
    let out = mfbsde(&["picard", "--config", &cfg], &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("picard,converged,0.0000000000000000e0,1.0000000000000000e0,false"));
}

#[test]
fn compare_reports_every_case() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"n_paths": 1024, "n_steps": 20, "compare": {"n_cases": 3}}"#);
    let out = mfbsde(&["compare", "--config", &cfg], &[]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(out.status.code(), Some(0), "{text}");
    assert_eq!(value(&text, "holds"), 3.0);
    assert_eq!(text.lines().filter(|l| l.split(',').nth(1) == Some("true")).count(), 3);
}

#[test]
fn malformed_tolerance_override_is_a_usage_error() {
    let out = mfbsde(&["acceptance"], &[("MFBSDE_TOL_OVERRIDE", "bogus")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}
