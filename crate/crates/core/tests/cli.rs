use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mgsim(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mgsim"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

const SMALL: &str = r#"
[grid]
n = 8

[physics]
kappa = 1.0
nu = 0.0

[time]
t_end = 0.5
snapshot_every = 0.0625

[[forcing.modes]]
k = [1, 1, 1]
re = 0.5
"#;

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    assert!(text.starts_with("# schema="), "{text}");
    text.lines()
        .skip(2)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

#[test]
fn audit_symbols_writes_passing_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = mgsim(&["audit-symbols", "--nu", "1e-2", "--K", "32", "--out", "a"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&dir.path().join("a/symbol_audit.csv"));
    let div = rows.iter().find(|r| r[0] == "divergence").unwrap();
    assert!(div[4].parse::<f64>().unwrap() <= 1e-12);
    let uni = rows.iter().find(|r| r[0] == "uniform" && r[3] == "1").unwrap();
    assert!(uni[4].parse::<f64>().unwrap() <= 3.0);
    assert!(rows.iter().all(|r| r[6] != "false"));
}

#[test]
fn simulate_with_zero_horizon_writes_initial_snapshot_only() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), SMALL.replace("t_end = 0.5", "t_end = 0.0")).unwrap();
    let out = mgsim(&["simulate", "run.toml", "--out", "o"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let snaps: Vec<_> = fs::read_dir(dir.path().join("o"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("theta_"))
        .collect();
    assert_eq!(snaps, ["theta_00000.mgf"]);
}

#[test]
fn simulate_is_deterministic_and_diagnosable() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), SMALL).unwrap();
    for out in ["a", "b"] {
        let o = mgsim(&["simulate", "run.toml", "--seed", "7", "--out", out], dir.path());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        // resolved configuration is echoed
        assert!(String::from_utf8_lossy(&o.stdout).contains("c_cfl = 0.5"));
    }
    let a = fs::read(dir.path().join("a/ledger.csv")).unwrap();
    let b = fs::read(dir.path().join("b/ledger.csv")).unwrap();
    assert_eq!(a, b);
    assert_eq!(
        fs::read(dir.path().join("a/theta_00008.mgf")).unwrap(),
        fs::read(dir.path().join("b/theta_00008.mgf")).unwrap()
    );

    let o = mgsim(&["diagnose", "a", "--out", "d"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!csv_rows(&dir.path().join("d/linf.csv")).is_empty());
    assert!(!csv_rows(&dir.path().join("d/de_giorgi.csv")).is_empty());
}

#[test]
fn unstable_sweep_writes_partial_report_and_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SMALL
        .replace("nu = 0.0", "nu_list = [1e-2, 1e-3]")
        .replace("t_end = 0.5", "t_end = 20.0\ndt_policy = \"fixed\"\ndt = 0.5")
        + "\n[initial]\nl2_norm = 1e4\nband = 2\n\n[study]\ntau = 0.0\n";
    fs::write(dir.path().join("run.toml"), cfg).unwrap();
    let out = mgsim(&["nu-sweep", "run.toml", "--out", "o"], dir.path());
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("o/nu_sweep.csv")).unwrap();
    assert!(text.starts_with("# schema=nu-sweep-v1\nnu,t,s,error\n"));
}

#[test]
fn attractor_runs_on_a_small_ensemble() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SMALL.replace("t_end = 0.5", "t_end = 3.0")
        + "\n[study]\nensemble_norms = [0.1, 5.0]\nensemble_seeds = 1\n";
    fs::write(dir.path().join("run.toml"), cfg).unwrap();
    let out = mgsim(&["attractor", "run.toml", "--out", "o"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&dir.path().join("o/absorbing_ball.csv"));
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| !r[3].is_empty()), "every member enters the ball");
    assert!(!csv_rows(&dir.path().join("o/distances.csv")).is_empty());
}

#[test]
fn usage_and_validation_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = mgsim(&["frobnicate"], dir.path());
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(code(&mgsim(&["simulate", "--bogus", "x"], dir.path())), 1);
    assert_eq!(code(&mgsim(&["simulate", "missing.toml"], dir.path())), 1);

    fs::write(dir.path().join("bad.toml"), SMALL.replace("[1, 1, 1]", "[1, 1, 0]")).unwrap();
    let out = mgsim(&["simulate", "bad.toml"], dir.path());
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("gauge violation: k3=0"));

    assert_eq!(code(&mgsim(&["diagnose", "nowhere"], dir.path())), 1);
    assert_eq!(code(&mgsim(&["--help"], dir.path())), 0);
}
