use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Mutex;
use std::time::Instant;

use discrete_fpca::cli::io;
use discrete_fpca::model::fourier;
use discrete_fpca::theory::optimal_bandwidth;

/// Serializes the Monte Carlo runs so the timing check is not skewed.
static HEAVY: Mutex<()> = Mutex::new(());

fn fpca(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fpca"))
        .current_dir(dir)
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

#[test]
fn simulate_writes_header_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.json", r#"{"design": {"n": 2, "n_obs": 3}, "seed": 4}"#);
    let o = fpca(dir.path(), &["simulate", "--config", "c.json", "--out", "a"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("a/dataset_0.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 7);
    assert_eq!(lines[0], "subject_id,obs_index,time,value");
}

#[test]
fn simulate_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.json", r#"{"design": {"n": 20, "n_obs": 5}, "datasets": 2}"#);
    for out in ["a", "b"] {
        let o = fpca(dir.path(), &["simulate", "--config", "c.json", "--seed", "17", "--out", out]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["dataset_0.csv", "dataset_1.csv", "scores_0.csv", "scores_1.csv"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    let a = std::fs::read(dir.path().join("a/dataset_0.csv")).unwrap();
    let b = std::fs::read(dir.path().join("a/dataset_1.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn noiseless_single_component_matches_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "c.json",
        r#"{"spec": {"noise_sd": 0.0, "truncation_j": 1}, "design": {"n": 6, "n_obs": 4}, "seed": 2}"#,
    );
    let o = fpca(dir.path(), &["simulate", "--config", "c.json", "--out", "o"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let data = io::read_dataset(&dir.path().join("o/dataset_0.csv")).unwrap();
    let scores = io::read_scores(&dir.path().join("o/scores_0.csv")).unwrap();
    for (i, s) in data.subjects.iter().enumerate() {
        for (t, v) in s.times.iter().zip(&s.values) {
            let expect = scores.get(i, 1) * fourier(1, *t);
            assert!((v - expect).abs() <= 1e-14 * expect.abs().max(1.0), "{v} vs {expect}");
        }
    }
}

#[test]
fn estimate_round_trip_and_optimal_bandwidth() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.json", r#"{"design": {"n": 60, "n_obs": 8}, "grid_size": 64, "eigen_count": 6}"#);
    assert!(fpca(dir.path(), &["simulate", "--config", "c.json", "--out", "s"]).status.success());
    let o = fpca(
        dir.path(),
        &["estimate", "--config", "c.json", "--data", "s/dataset_0.csv", "--out", "e1", "--bandwidth", "corollary1", "--m", "3"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let vals = io::read_eigenvalues(&dir.path().join("e1/eigenvalues.csv")).unwrap();
    assert_eq!(vals.len(), 6);
    assert!(vals.windows(2).all(|w| w[0] >= w[1]));
    let (grid, funcs) = io::read_eigenfunctions(&dir.path().join("e1/eigenfunctions.csv")).unwrap();
    assert_eq!((grid.len(), funcs.len()), (64, 6));
    let (cgrid, cov) = io::read_covariance(&dir.path().join("e1/covariance.csv")).unwrap();
    assert_eq!(cgrid, grid);
    assert_eq!(cov.nrows(), 64);

    let h = optimal_bandwidth(60, 8, 3, 2.0, 2.0).unwrap();
    let fixed = format!("fixed:{h:?}");
    let o = fpca(
        dir.path(),
        &["estimate", "--config", "c.json", "--data", "s/dataset_0.csv", "--out", "e2", "--bandwidth", &fixed],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["covariance.csv", "eigenvalues.csv", "eigenfunctions.csv"] {
        assert_eq!(
            std::fs::read(dir.path().join("e1").join(f)).unwrap(),
            std::fs::read(dir.path().join("e2").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn input_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "empty.csv", "subject_id,obs_index,time,value\n");
    let o = fpca(dir.path(), &["estimate", "--data", "empty.csv", "--out", "x"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no observations"), "{}", stderr(&o));

    write(dir.path(), "bad.csv", "subject_id,obs_index,time,value\n0,0,0.1,1\n0,1,0.2\n");
    let o = fpca(dir.path(), &["estimate", "--data", "bad.csv", "--out", "x"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.csv:3"), "{}", stderr(&o));

    write(dir.path(), "c.json", "{\n  \"design\": {\"n\": 2, \"n_obs\": 3},\n  \"nosuchkey\": true\n}\n");
    let o = fpca(dir.path(), &["simulate", "--config", "c.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("c.json:3:"), "{}", stderr(&o));

    let o = fpca(dir.path(), &["simulate", "--bandwidth", "fixed:2"]);
    assert_eq!(o.status.code(), Some(2));
    let o = fpca(dir.path(), &["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn environment_overrides_mirror_flags() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.json", r#"{"design": {"n": 3, "n_obs": 2}}"#);
    let o = Command::new(env!("CARGO_BIN_EXE_fpca"))
        .current_dir(dir.path())
        .args(["simulate", "--config", "c.json"])
        .env("FPCA_OUT", "from_env")
        .env("FPCA_SEED", "9")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let a = std::fs::read(dir.path().join("from_env/dataset_0.csv")).unwrap();
    assert!(fpca(dir.path(), &["simulate", "--config", "c.json", "--seed", "9", "--out", "flag"]).status.success());
    assert_eq!(a, std::fs::read(dir.path().join("flag/dataset_0.csv")).unwrap());
}

#[test]
fn rates_prints_json() {
    let dir = tempfile::tempdir().unwrap();
    let o = fpca(dir.path(), &["rates", "--n", "2000", "--n-obs", "50", "--j", "2", "--m", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let h = optimal_bandwidth(2000, 50, 2, 2.0, 2.0).unwrap();
    assert_eq!(v["inputs"]["h"].as_f64().unwrap(), h);
    assert_eq!(v["regime"], "dense_optimal");
    let o = fpca(dir.path(), &["rates", "--n", "2000", "--n-obs", "50", "--j", "2"]);
    assert_eq!(o.status.code(), Some(2));
}

const SMALL_VERIFY: &str = r#"{
  "suites": [
    { "suite": "invariants", "replicates": 4 },
    { "suite": "dense_rate", "targets": [1], "sample_sizes": [50, 200, 800], "replicates": 6, "grid": 64 }
  ]
}"#;

#[test]
fn verify_is_identical_across_widths() {
    let _guard = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "v.json", SMALL_VERIFY);
    for (w, out) in [("1", "p1"), ("3", "p3")] {
        let o = fpca(dir.path(), &["verify", "--config", "v.json", "--parallel", w, "--out", out]);
        assert!(matches!(o.status.code(), Some(0 | 1)), "{}", stderr(&o));
    }
    for f in ["report.json", "summary.csv", "fits.csv", "checks.csv"] {
        assert_eq!(
            std::fs::read(dir.path().join("p1").join(f)).unwrap(),
            std::fs::read(dir.path().join("p3").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn out_of_theory_plans_are_flagged_not_failed() {
    let _guard = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "v.json",
        r#"{"suites": [{ "suite": "dense_rate", "targets": [4], "n_obs": 8, "sample_sizes": [20, 80, 320], "replicates": 3, "grid": 64 }]}"#,
    );
    let o = fpca(dir.path(), &["verify", "--config", "v.json", "--out", "o"]);
    assert_eq!(o.status.code(), Some(0), "{}{}", String::from_utf8_lossy(&o.stdout), stderr(&o));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("o/report.json")).unwrap()).unwrap();
    let check = &report["suites"][0]["checks"][0];
    assert_eq!(check["out_of_theory"], true);
    let rows = report["suites"][0]["reports"][0]["rows"].as_array().unwrap();
    assert!(rows.iter().all(|r| r["out_of_theory"] == true));
}

#[test]
fn bundled_quick_config_passes_within_a_minute() {
    let _guard = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
    let dir = tempfile::tempdir().unwrap();
    let cfg = repo_root().join("configs/quick.json");
    let start = Instant::now();
    let o = fpca(dir.path(), &["verify", "--config", cfg.to_str().unwrap(), "--out", "q"]);
    let secs = start.elapsed().as_secs_f64();
    assert_eq!(o.status.code(), Some(0), "{}{}", String::from_utf8_lossy(&o.stdout), stderr(&o));
    assert!(secs < 60.0, "quick verify took {secs:.1} s");
    assert!(dir.path().join("q/report.json").exists());
}
