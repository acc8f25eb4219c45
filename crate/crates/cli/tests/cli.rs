use std::path::Path;
use std::process::{Command, Output};

fn tsgd(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tsgd"))
        .args(args)
        .current_dir(dir)
        .env("TSGD_THREADS", "2")
        .output()
        .expect("binary runs")
}

const QUADRATIC: &str = r#"{
    "problem": {"kind": "quadratic", "diag": {"dim": 4, "min": 1.0, "max": 10.0}, "noise_sigma": 1.0},
    "schedule": {"kind": "harmonic", "theta": 2.0, "gamma": 1.0},
    "optimizer": "tsgd",
    "n_steps": 2000,
    "n_paths": 20,
    "record_every": 10,
    "seed": 3,
    "output": "agg.csv"
}"#;

fn write_config(dir: &Path) -> String {
    std::fs::write(dir.join("cfg.json"), QUADRATIC).unwrap();
    "cfg.json".into()
}

#[test]
fn run_then_rate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = tsgd(&["run", &cfg], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("agg.csv")).unwrap();
    assert!(csv.starts_with("n,alpha,mean_err_sq,se_err_sq,mean_f_gap,se_f_gap\n"));
    assert_eq!(csv.lines().count(), 201);

    let out = tsgd(&["rate", "agg.csv", "--from", "200", "--to", "2000"], dir.path());
    assert!(out.status.success());
    let slope: f64 = String::from_utf8(out.stdout).unwrap().trim().parse().unwrap();
    assert!((-1.5..=-0.6).contains(&slope), "slope {slope}");
}

#[test]
fn run_to_stdout_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let a = tsgd(&["run", &cfg, "--output", "a.csv"], dir.path());
    let b = tsgd(&["--threads", "1", "run", &cfg, "--output", "b.csv"], dir.path());
    assert!(a.status.success() && b.status.success());
    assert_eq!(
        std::fs::read(dir.path().join("a.csv")).unwrap(),
        std::fs::read(dir.path().join("b.csv")).unwrap()
    );
}

#[test]
fn sweep_writes_one_row_per_gamma_and_optimizer() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = tsgd(&["sweep", &cfg, "--gammas", "1,100,10000"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "gamma,optimizer,final_err,max_err,diverged");
    assert_eq!(lines.len(), 7);
    assert!(lines[1].contains(",tsgd,") && lines[2].contains(",sgd,"));
}

#[test]
fn verify_passes_every_check() {
    let dir = tempfile::tempdir().unwrap();
    let out = tsgd(&["verify"], dir.path());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(out.status.success(), "{text}");
    assert_eq!(text.lines().count(), 8);
    assert!(text.lines().all(|l| l.starts_with("PASS ")), "{text}");
}

#[test]
fn validation_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), QUADRATIC.replace("\"n_paths\": 20", "\"n_paths\": 0")).unwrap();
    assert_eq!(tsgd(&["run", "bad.json"], dir.path()).status.code(), Some(1));
    assert_eq!(tsgd(&["run", "missing.json"], dir.path()).status.code(), Some(1));
    assert_eq!(tsgd(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(tsgd(&["sweep", "bad.json"], dir.path()).status.code(), Some(1));
    assert_eq!(tsgd(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn rate_rejects_short_ranges() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("agg.csv"),
        "n,alpha,mean_err_sq,se_err_sq,mean_f_gap,se_f_gap\n1,1,1,0,1,0\n",
    )
    .unwrap();
    assert_eq!(tsgd(&["rate", "agg.csv", "--from", "1", "--to", "10"], dir.path()).status.code(), Some(1));
}
