mod common;

use std::process::Command;

use tcl_elim::experiments::*;
use tcl_elim::liouvillian::vectorize;
use tcl_elim::numerics::*;
use tcl_elim::Error;

use common::{random_gksl, random_matrix, random_state, rng};

#[test]
fn integrator_matches_matrix_exponential() {
    let mut r = rng(5);
    let l = random_gksl(&mut r, 3, 2);
    let rho0 = random_state(&mut r, 3);
    let grid = [0.0, 0.7, 2.0];
    let out = integrate_master(&l, &rho0, &grid, 1e-3).unwrap();
    for (rho, &t) in out.iter().zip(&grid) {
        let want = expm(&l, t).dot(&vectorize(&rho0));
        assert!(vec_norm(&(vectorize(rho) - want)) < 1e-9);
        assert!((trace(rho) - ONE).norm() < 1e-12);
    }
}

#[test]
fn integrator_leaves_state_fixed_under_zero_generator() {
    let mut r = rng(6);
    let rho0 = random_state(&mut r, 2);
    let out = integrate_master(&zeros(4, 4), &rho0, &[0.0, 1.0, 5.0], 0.1).unwrap();
    for rho in &out {
        assert_eq!(rho, &rho0);
    }
}

#[test]
fn integrator_rejects_invalid_input() {
    let mut r = rng(7);
    let l = random_gksl(&mut r, 2, 1);
    let rho = random_state(&mut r, 2);
    assert!(matches!(
        integrate_master(&l, &rho.mapv(|z| z * 2.0), &[0.0, 1.0], 1e-2),
        Err(Error::InvalidParams(_))
    ));
    let mut skew = rho.clone();
    skew[[0, 1]] += c(0.1, 0.0);
    assert!(matches!(
        integrate_master(&l, &skew, &[0.0, 1.0], 1e-2),
        Err(Error::InvalidParams(_))
    ));
    assert!(integrate_master(&l, &rho, &[0.0, 1.0], 0.0).is_err());
    assert!(matches!(
        integrate_master(&l, &random_state(&mut r, 3), &[0.0], 1e-2),
        Err(Error::DimensionMismatch(_))
    ));
}

#[test]
fn sparse_product_matches_dense() {
    let mut r = rng(8);
    let mut m = random_matrix(&mut r, 7);
    for i in 0..7 {
        m[[i, (i + 3) % 7]] = ZERO;
    }
    let v = ndarray::Array1::from_shape_fn(7, |k| c(k as f64, 1.0 - k as f64));
    let csr = CsrMatrix::from_dense(&m);
    assert_eq!(csr.nnz(), 42);
    assert!(vec_norm(&(csr.dot(&v) - m.dot(&v))) < 1e-13);
}

#[test]
fn uniform_grid_includes_endpoints() {
    let g = uniform_grid(1.0, 0.25);
    assert_eq!(g, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
}

fn config(json: &str) -> ExperimentConfig {
    serde_json::from_str(json).unwrap()
}

#[test]
fn config_parses_model_params_and_rejects_unknown() {
    let cfg = config(
        r#"{"experiment": "prop-verify", "model": {"name": "three-level", "g0": 0.0, "g1": 0.0}}"#,
    );
    let report = run(&cfg).unwrap();
    assert!(report.pass["dp_vanishes"]);
    assert!(report.all_pass());
    let bad =
        config(r#"{"experiment": "prop-verify", "model": {"name": "three-level", "g0": "x"}}"#);
    assert!(matches!(run(&bad), Err(Error::Config(_))));
    assert!(matches!(
        run(&ExperimentConfig::new("nope")),
        Err(Error::Config(_))
    ));
    let window = config(
        r#"{"experiment": "prop-verify", "grid": {"t_max": 5, "dt": 0.1}, "fit": {"t_min": 6, "t_max": 8}}"#,
    );
    assert!(matches!(run(&window), Err(Error::Config(_))));
}

#[test]
fn amplitude_ratio_scales_with_coupling() {
    let ratio = |g: f64| {
        let cfg = config(&format!(
            r#"{{"experiment": "prop-verify", "model": {{"name": "three-level", "g0": {g}, "g1": {g}}}}}"#
        ));
        run(&cfg).unwrap().scalars["amplitude_ratio"]
    };
    let q = ratio(0.05) / ratio(0.1);
    assert!((0.4..0.6).contains(&q), "ratio quotient {q}");
}

#[test]
fn report_writes_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let report = run(&ExperimentConfig::new("prop-verify")).unwrap();
    report.write(dir.path(), OutputFormat::Csv).unwrap();
    let text = std::fs::read_to_string(dir.path().join("dp_norm.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,value"));
    assert_eq!(lines.count(), report.series["dp_norm"].len());
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(json["experiment"], "prop-verify");
    assert_eq!(json["pass"]["rate_p"], true);
    assert!(json["fits"]["dp_norm"]["rate"].as_f64().unwrap() > 0.9);

    let jdir = tempfile::tempdir().unwrap();
    report.write(jdir.path(), OutputFormat::Json).unwrap();
    let rows: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(jdir.path().join("j_norm.json")).unwrap())
            .unwrap();
    assert_eq!(rows[0]["t"], 0.0);
}

#[test]
fn choi_helper_detects_negativity() {
    // Identity channel: Choi matrix |Omega><Omega| (unnormalized), eigenvalues {2, 0, 0, 0}.
    assert!(choi_min_eigenvalue(&identity(4)).unwrap().abs() < 1e-14);
    // Transpose map is positive but not completely positive.
    let mut swap = zeros(4, 4);
    for (i, j) in [(0, 0), (1, 2), (2, 1), (3, 3)] {
        swap[[i, j]] = ONE;
    }
    assert!((choi_min_eigenvalue(&swap).unwrap() + 1.0).abs() < 1e-12);
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_tcl-elim"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("pv");
    let ok = cli(&[
        "prop-verify",
        "--out",
        out.to_str().unwrap(),
        "--threads",
        "1",
    ]);
    assert_eq!(
        ok.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&ok.stderr)
    );
    assert!(out.join("dp_norm.csv").exists() && out.join("report.json").exists());
    assert!(String::from_utf8_lossy(&ok.stdout).contains("PASS rate_p"));

    let strict = dir.path().join("strict.json");
    std::fs::write(
        &strict,
        r#"{"experiment": "prop-verify", "tolerances": {"ratio_min": 0.5, "ratio_max": 0.6}}"#,
    )
    .unwrap();
    let fail = cli(&[
        "prop-verify",
        "--config",
        strict.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(fail.status.code(), Some(2));

    let json_out = dir.path().join("json");
    let fmt = cli(&[
        "prop-verify",
        "--format",
        "json",
        "--out",
        json_out.to_str().unwrap(),
    ]);
    assert_eq!(fmt.status.code(), Some(0));
    assert!(json_out.join("dp_norm.json").exists());

    let missing = cli(&["prop-verify", "--config", "/nonexistent/cfg.json"]);
    assert_eq!(missing.status.code(), Some(1));
    let mismatch = cli(&["choi", "--config", strict.to_str().unwrap()]);
    assert_eq!(mismatch.status.code(), Some(1));
}
