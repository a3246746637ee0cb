//! End-to-end tests driving the built `halfspace` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use halfspace_cli::ingest::{datum_csv, read_datum_csv};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_halfspace")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, contents: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, contents).expect("write config");
    path.to_string_lossy().into_owned()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const LAPLACIAN_2D: &str = r#"{"operator": {"laplacian": {"n": 2}}}"#;

#[test]
fn verify_laplacian_passes_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", LAPLACIAN_2D);
    let out = run_in(dir.path(), &["verify", "--config", &cfg, "--out", "art"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    assert!(stdout_of(&out).contains("identities within threshold"));

    let text = fs::read_to_string(dir.path().join("art/verify.json")).unwrap();
    let reports: serde_json::Value = serde_json::from_str(&text).unwrap();
    let arr = reports.as_array().expect("array of reports");
    assert_eq!(arr.len(), 16, "kernel-level identity count for a scalar operator");
    for r in arr {
        assert!(r["max_residual"].as_f64().unwrap() >= 0.0);
        assert!(r["identity_id"].is_string());
        assert!(r["points_tested"].as_u64().unwrap() > 0);
    }
    let ids: Vec<&str> = arr.iter().map(|r| r["identity_id"].as_str().unwrap()).collect();
    assert!(ids.contains(&"unit_integral"));
    assert!(ids.contains(&"p_equals_2k"));
    assert!(ids.contains(&"fundamental_decay"));
}

#[test]
fn check_tensor_rejects_off_distinguished_lame() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        r#"{"operator": {"lame": {"mu": 1, "lambda": 1, "theta": 0.9}}}"#,
    );
    let out = run_in(dir.path(), &["check-tensor", "--config", &cfg, "--out", "art"]);
    assert_eq!(out.status.code(), Some(1));

    let text = fs::read_to_string(dir.path().join("art/check-tensor.json")).unwrap();
    let report: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(report["verdict"], serde_json::Value::Bool(false));
    assert!(report["condition_a_residual"].as_f64().unwrap() > 1e-2);
}

#[test]
fn check_tensor_accepts_distinguished_lame() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        r#"{"operator": {"lame": {"mu": 1, "lambda": 1}}}"#,
    );
    let out = run_in(dir.path(), &["check-tensor", "--config", &cfg, "--out", "art"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let text = fs::read_to_string(dir.path().join("art/check-tensor.json")).unwrap();
    let report: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(report["verdict"], serde_json::Value::Bool(true));
}

#[test]
fn malformed_configs_exit_2_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();

    // Structurally malformed operator: serde reports the failing position.
    let cfg = write(
        dir.path(),
        "bad-entries.json",
        r#"{"operator": {"n": 2, "M": 1, "entries": "nope"}}"#,
    );
    let out = run_in(dir.path(), &["check-tensor", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("line"), "stderr: {}", stderr_of(&out));

    // Well-formed JSON, invalid 1-based index.
    let cfg = write(
        dir.path(),
        "bad-index.json",
        r#"{"operator": {"n": 2, "M": 1,
            "entries": [{"alpha": 0, "beta": 1, "r": 1, "s": 1, "re": 1.0}]}}"#,
    );
    let out = run_in(dir.path(), &["check-tensor", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("out of range"), "stderr: {}", stderr_of(&out));

    // Unknown top-level key.
    let cfg = write(
        dir.path(),
        "bad-key.json",
        r#"{"operator": {"laplacian": {"n": 2}}, "grd": {}}"#,
    );
    let out = run_in(dir.path(), &["verify", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("unknown field"), "stderr: {}", stderr_of(&out));

    // Unknown tolerance key.
    let cfg = write(
        dir.path(),
        "bad-tol.json",
        r#"{"operator": {"laplacian": {"n": 2}}, "tolerances": {"definitely_not_an_id": 1.0}}"#,
    );
    let out = run_in(dir.path(), &["verify", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("unknown tolerance key"));

    // Missing --config entirely.
    let out = run_in(dir.path(), &["verify"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_task_pin_must_match_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        r#"{"operator": {"laplacian": {"n": 2}}, "task": "solve"}"#,
    );
    let out = run_in(dir.path(), &["verify", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("pins task"));
}

#[test]
fn tolerance_override_gates_the_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        r#"{"operator": {"laplacian": {"n": 2}},
            "tolerances": {"extension_annihilated": 1e-12}}"#,
    );
    let out = run_in(dir.path(), &["verify", "--config", &cfg, "--out", "art"]);
    assert_eq!(out.status.code(), Some(1), "unreachable override must fail the run");
    assert!(stdout_of(&out).contains("FAIL extension_annihilated"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", LAPLACIAN_2D);
    for sub in ["a", "b"] {
        let out = run_in(dir.path(), &["verify", "--config", &cfg, "--out", sub]);
        assert_eq!(out.status.code(), Some(0));
    }
    let a = fs::read(dir.path().join("a/verify.json")).unwrap();
    let b = fs::read(dir.path().join("b/verify.json")).unwrap();
    assert_eq!(a, b, "identical config + seed must give identical artifacts");
}

const SOLVE_CFG: &str = r#"{
  "operator": {"laplacian": {"n": 2}},
  "grid": {"n": 2, "half_width": 8.0, "points_per_axis": 129},
  "datum": {"components": [[{"kind": "gaussian", "decay": 0.5}]], "ell": 1},
  "solve": {"heights": [0.25, 0.5], "points": [[0.0], [1.0], [-2.0]]}
}"#;

#[test]
fn solve_writes_expected_csv_shape() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", SOLVE_CFG);
    let out = run_in(dir.path(), &["solve", "--config", &cfg, "--out", "art"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let text = fs::read_to_string(dir.path().join("art/solve.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x1,t,component,re,im,trunc_bound"));
    assert_eq!(lines.count(), 2 * 3, "heights x points x components data rows");

    // Determinism of the CSV artifact.
    let out = run_in(dir.path(), &["solve", "--config", &cfg, "--out", "art2"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        fs::read(dir.path().join("art/solve.csv")).unwrap(),
        fs::read(dir.path().join("art2/solve.csv")).unwrap()
    );
}

#[test]
fn solve_rejects_out_of_margin_points() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        &SOLVE_CFG.replace("[[0.0], [1.0], [-2.0]]", "[[7.5]]"),
    );
    let out = run_in(dir.path(), &["solve", "--config", &cfg, "--out", "art"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("margin"));
}

#[test]
fn maximal_report_emits_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        r#"{
          "operator": {"laplacian": {"n": 2}},
          "grid": {"n": 2, "half_width": 6.0, "points_per_axis": 65},
          "datum": {"components": [[{"kind": "gaussian", "decay": 0.5}]], "ell": 1},
          "maximal": {"p": 2.0, "ell": 1, "kappa": 1.0, "report_stride": 4}
        }"#,
    );
    let out = run_in(dir.path(), &["maximal-report", "--config", &cfg, "--out", "art"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));

    let text = fs::read_to_string(dir.path().join("art/maximal-report.json")).unwrap();
    let report: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(report["p"].as_f64(), Some(2.0));
    assert_eq!(report["values"].as_array().unwrap().len(), 2);
    assert!(report["datum_norm"].as_f64().unwrap() > 0.0);
    assert!(report["empirical_c"].as_f64().unwrap().is_finite());

    let csv = fs::read_to_string(dir.path().join("art/maximal-report.csv")).unwrap();
    assert!(csv.starts_with("x1,k,ntmax\n"));
    assert!(csv.lines().count() > 2);
}

#[test]
fn export_kernel_emits_row_major_samples() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        r#"{"operator": {"lame": {"mu": 1, "lambda": 1, "n": 2}},
            "grid": {"n": 2, "half_width": 2.0, "points_per_axis": 17}}"#,
    );
    let out = run_in(dir.path(), &["export-kernel", "--config", &cfg, "--out", "art"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let text = fs::read_to_string(dir.path().join("art/kernel.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x1,alpha,beta,re,im"));
    // 17 lattice points x (2x2) matrix entries.
    assert_eq!(lines.clone().count(), 17 * 4);
    let first = lines.next().unwrap();
    assert!(first.starts_with("-2.0000000000000000e0,1,1,"));
}

// ---------------------------------------------------------------------------
// CSV datum ingestion.

fn sample_csv() -> String {
    let mut out = String::from("x1,component,value\n");
    let (r, n) = (2.0f64, 17usize);
    let h = 2.0 * r / (n - 1) as f64;
    for k in 0..n {
        let x = -r + k as f64 * h;
        let v = (-x * x).exp() * (1.0 + 0.25 * x);
        out.push_str(&format!("{x:.16e},1,{v:.16e}\n"));
    }
    out
}

#[test]
fn datum_csv_round_trips_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("datum.csv");
    fs::write(&path, sample_csv()).unwrap();

    let data = read_datum_csv(&path, 1, 2.0).expect("ingest");
    assert_eq!(data.grid().points_per_axis, 17);
    assert_eq!(data.grid().half_width, 2.0);
    assert_eq!(data.ell(), 1);

    let exported = datum_csv(&data).expect("export");
    let reread = read_datum_csv(&write_tmp(dir.path(), &exported), 1, 2.0).unwrap();
    let gamma0 = vec![0usize];
    assert_eq!(
        data.samples(&gamma0).unwrap(),
        reread.samples(&gamma0).unwrap(),
        "export -> ingest must reproduce samples bit-exactly"
    );
    // A second export is textually identical.
    assert_eq!(exported, datum_csv(&reread).unwrap());
}

fn write_tmp(dir: &Path, contents: &str) -> std::path::PathBuf {
    let path = dir.join("reexport.csv");
    fs::write(&path, contents).unwrap();
    path
}

#[test]
fn solve_accepts_csv_datum() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("datum.csv"), sample_csv()).unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        r#"{
          "operator": {"laplacian": {"n": 2}},
          "datum": {"csv": "datum.csv", "ell": 0},
          "solve": {"heights": [0.5], "points": [[0.0]]}
        }"#,
    );
    let out = run_in(dir.path(), &["solve", "--config", &cfg, "--out", "art"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let text = fs::read_to_string(dir.path().join("art/solve.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn nonuniform_csv_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let broken = sample_csv().replace("5.0000000000000000e-1,1,", "5.1000000000000000e-1,1,");
    fs::write(dir.path().join("datum.csv"), broken).unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        r#"{
          "operator": {"laplacian": {"n": 2}},
          "datum": {"csv": "datum.csv", "ell": 0},
          "solve": {"heights": [0.5], "points": [[0.0]]}
        }"#,
    );
    let out = run_in(dir.path(), &["solve", "--config", &cfg, "--out", "art"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_of(&out);
    assert!(
        err.contains("uniform") || err.contains("lattice node"),
        "stderr: {err}"
    );
}

#[test]
fn csv_datum_derivative_order_is_capped() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("datum.csv"), sample_csv()).unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        r#"{
          "operator": {"laplacian": {"n": 2}},
          "datum": {"csv": "datum.csv", "ell": 3},
          "solve": {"heights": [0.5], "points": [[0.0]]}
        }"#,
    );
    let out = run_in(dir.path(), &["solve", "--config", &cfg, "--out", "art"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("cap"));
}

#[test]
fn seed_flag_keeps_verdicts_stable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", LAPLACIAN_2D);
    let out = run_in(
        dir.path(),
        &["verify", "--config", &cfg, "--out", "art", "--seed", "7"],
    );
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let text = fs::read_to_string(dir.path().join("art/verify.json")).unwrap();
    let reports: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(reports.as_array().unwrap().len(), 16);
}
