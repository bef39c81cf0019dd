use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn morl(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_morl"))
        .args(args)
        .current_dir(cwd)
        .env_remove("MORL_OUT")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

/// Compares a log against the golden file, ignoring wall-clock time.
fn assert_log_matches(log: &str, golden: &str) {
    let rows: Vec<&str> = log.lines().collect();
    let expected: Vec<&str> = golden.lines().collect();
    assert_eq!(rows.len(), expected.len());
    assert_eq!(rows[0], "epoch,episodes,steps,f_value,theta_norm,wall_ms");
    for (got, want) in rows[1..].iter().zip(&expected[1..]) {
        let g: Vec<&str> = got.split(',').collect();
        let w: Vec<&str> = want.split(',').collect();
        assert_eq!(g[..3], w[..3], "counters differ: {got} vs {want}");
        for k in 3..5 {
            let (a, b): (f64, f64) = (g[k].parse().unwrap(), w[k].parse().unwrap());
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "{got} vs {want}");
        }
    }
}

#[test]
fn run_matches_golden_log() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"T": 4, "N": 6, "m": 2, "B": 3, "H": 15}"#,
    );
    let o = morl(
        &[
            "run",
            "--config",
            &cfg,
            "--env",
            "dst",
            "--algo",
            "mo-tsivr-pg",
            "--seed",
            "11",
            "--out",
            "o",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let log = fs::read_to_string(dir.path().join("o/run-000/log.csv")).unwrap();
    assert_log_matches(&log, include_str!("golden/dst_tsivr_seed11.csv"));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("median final f = 11.343591"), "{stdout}");
}

#[test]
fn effective_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"env": {"kind": "server-queues", "queues": 3}, "algo": "mo-pg", "hyper": {"T": 3, "N": 4, "H": 10}, "runs": 2}"#,
    );
    let a = morl(&["run", "--config", &cfg, "--out", "a"], dir.path());
    assert!(a.status.success(), "{}", stderr(&a));
    let b = morl(
        &["run", "--config", "a/config.json", "--out", "b"],
        dir.path(),
    );
    assert!(b.status.success(), "{}", stderr(&b));
    for run in ["run-000", "run-001"] {
        let read = |root: &str| {
            fs::read_to_string(dir.path().join(root).join(run).join("final.json")).unwrap()
        };
        assert_eq!(read("a"), read("b"));
    }
    assert_eq!(
        fs::read_to_string(dir.path().join("a/manifest.json")).unwrap(),
        fs::read_to_string(dir.path().join("b/manifest.json")).unwrap()
    );
}

#[test]
fn rerun_reuses_finished_runs_and_refuses_other_configs() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["run", "--env", "dst", "--algo", "mo-pg", "--out", "o"];
    let cfg = write(dir.path(), "c.json", r#"{"T": 2, "N": 3, "H": 10}"#);
    let mut first: Vec<&str> = args.to_vec();
    first.extend(["--config", &cfg]);
    assert!(morl(&first, dir.path()).status.success());
    let before = fs::read_to_string(dir.path().join("o/run-000/log.csv")).unwrap();
    assert!(morl(&first, dir.path()).status.success());
    assert_eq!(
        before,
        fs::read_to_string(dir.path().join("o/run-000/log.csv")).unwrap()
    );
    let mut other = first.clone();
    other.extend(["--seed", "5"]);
    let o = morl(&other, dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(
        stderr(&o).contains("different configuration"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn misspelled_key_is_a_usage_error_with_suggestion() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"env": "dst", "algo": "mo-pg", "batchsize": 10}"#,
    );
    let o = morl(&["run", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).contains("unknown key `batchsize`; did you mean `N`?"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn preset_with_explicit_hyperparameters_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"env": "server-queues", "gamma": 0.9, "eta": 0.1}"#,
    );
    let o = morl(
        &[
            "run", "--config", &cfg, "--preset", "thm2", "--M", "2", "--eps", "0.5",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`eta`"), "{}", stderr(&o));
}

#[test]
fn compare_refuses_unequal_budgets() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"env": "dst", "T": 2, "compare": {"mo-pg": {"N": 10}}}"#,
    );
    let o = morl(&["compare", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(
        e.contains("2N = 20") && e.contains("2N + 2(m-1)B = 576"),
        "{e}"
    );
}

#[test]
fn compare_writes_both_algorithms() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"env": "dst", "H": 10, "T": 2, "compare": {"mo-pg": {"N": 6}, "mo-tsivr-pg": {"N": 2, "m": 3, "B": 2}}}"#,
    );
    let o = morl(&["compare", "--config", &cfg, "--out", "c"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let root = dir.path().join("c");
    for algo in ["mo-pg", "mo-tsivr-pg"] {
        assert!(root.join(algo).join("run-000/log.csv").exists());
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("compare.json")).unwrap()).unwrap();
    assert_eq!(summary["mo-pg"]["episodes"], 24);
    assert_eq!(summary["mo-tsivr-pg"]["episodes"], 24);
}

#[test]
fn exponents_requires_queues() {
    let dir = tempfile::tempdir().unwrap();
    let o = morl(
        &["exponents", "--env", "dst", "--algo", "mo-pg"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("server-queues"));
}

#[test]
fn exponents_sweep_writes_fit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"env": "server-queues", "algo": "mo-pg", "hyper": {"T": 12, "N": 4, "H": 8, "eta": 0.05, "gamma": 0.9},
            "experiment": {"M_values": [2, 3], "runs": 2}}"#,
    );
    let o = morl(&["exponents", "--config", &cfg, "--out", "e"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let root = dir.path().join("e");
    assert!(root.join("M-2/gap.csv").exists() && root.join("M-3/gap.csv").exists());
    let fit: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("exponents.json")).unwrap()).unwrap();
    assert!(
        fit["a_hat"].is_number() && fit["b_hat"].is_number(),
        "{fit}"
    );
}

#[test]
fn out_dir_falls_back_to_environment_variable() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_morl"))
        .args([
            "run", "--env", "dst", "--algo", "mo-pg", "--seed", "4", "--config",
        ])
        .arg(write(dir.path(), "c.json", r#"{"T": 1, "N": 2, "H": 5}"#))
        .current_dir(dir.path())
        .env("MORL_OUT", dir.path().join("results"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir
        .path()
        .join("results/dst-mo-pg-seed4/run-000/final.json")
        .exists());
}

#[test]
fn verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = morl(&["verify"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("11 of 11 checks passed"));
}

#[test]
fn bad_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(morl(&["run", "--bogus"], dir.path()).status.code(), Some(2));
    assert_eq!(
        morl(&["run", "--algo", "sgd"], dir.path()).status.code(),
        Some(2)
    );
}
