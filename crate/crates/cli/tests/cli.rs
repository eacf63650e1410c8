mod common;

use common::{compiled_schema, files_under, hkflow, read_json, schema_errors};
use serde_json::Value;

fn stdout_json(args: &[&str]) -> Value {
    let out = hkflow(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

fn error_kind(out: &std::process::Output) -> String {
    let err: Value = serde_json::from_slice(&out.stderr).expect("error JSON on stderr");
    err["error"].as_str().unwrap().to_string()
}

#[test]
fn missing_mesh_is_an_io_error() {
    let out = hkflow(&[
        "flow",
        "--mesh",
        "/nonexistent/mesh.off",
        "--stop_t",
        "0.01",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "MeshNotFound");
}

#[test]
fn constants_table() {
    let out = hkflow(&["constants", "--n", "2", "--k", "2", "--t", "1"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let value = |name: &str| -> String {
        text.lines()
            .find(|l| l.split_whitespace().next() == Some(name))
            .unwrap()
            .split_whitespace()
            .nth(1)
            .unwrap()
            .into()
    };
    assert_eq!(value("Q_k"), "4");
    assert_eq!(value("gamma"), "3.125");
    assert_eq!(value("c_n"), "18.0540666735");

    let doc = stdout_json(&["constants", "--n", "3", "--k", "1", "--json"]);
    assert_eq!(doc["sobolev"]["q_k"].as_f64(), Some(3.0));
    assert!(doc["moser"].is_null());

    let out = hkflow(&["constants", "--n", "2", "--k", "4"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn sphere_queries() {
    let doc = stdout_json(&[
        "sphere", "--n", "2", "--k", "2", "--r0", "1", "--alpha", "4,5", "--json",
    ]);
    assert!((doc["t_max"].as_f64().unwrap() - 1.0 / 12.0).abs() < 1e-15);
    let integral = doc["norms"][0]["integral"].as_f64().unwrap();
    assert!((integral - 16.0 * std::f64::consts::PI).abs() < 1e-10);
    assert_eq!(doc["norms"][1]["divergent"], Value::Bool(true));

    let out = hkflow(&["sphere", "--t", "0.09"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_kind(&out), "TimeBeyondTmax");
}

#[test]
fn ellipsoid_area_decreases() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let out = hkflow(&[
        "flow",
        "--mesh",
        "ellipsoid:1:0.9:0.8:4",
        "--k",
        "2",
        "--stop_t",
        "0.02",
        "--output_dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(out_dir.join("trajectory.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "area").unwrap();
    let areas: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(col).unwrap().parse().unwrap())
        .collect();
    assert!(areas.len() > 10);
    assert!(areas.windows(2).all(|w| w[1] < w[0]));
    let manifest = read_json(&out_dir.join("manifest.json"));
    assert_eq!(manifest["termination"], "reached_T");
}

#[test]
fn config_file_with_overrides_and_off_input() {
    let dir = tempfile::tempdir().unwrap();
    let mesh_path = dir.path().join("sphere.off");
    std::fs::write(
        &mesh_path,
        hkflow_cli::meshio::off_string(&hkflow::mesh::icosphere(2, 1.0).unwrap()),
    )
    .unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        format!(
            "# diagnose a stored sphere\nmesh = {}\nk = 3\nchecks = michael_simon, gradient_form\n",
            mesh_path.display()
        ),
    )
    .unwrap();
    let doc = stdout_json(&[
        "diagnose",
        "--config",
        cfg.to_str().unwrap(),
        "--k",
        "2",
        "--seed",
        "7",
    ]);
    assert_eq!(doc["config"]["k"], 2);
    assert_eq!(doc["config"]["seed"], 7);
    assert_eq!(doc["static_checks"].as_array().unwrap().len(), 6);
    assert_eq!(doc["all_hold"], Value::Bool(true));
    assert!(schema_errors(&compiled_schema(), &doc).is_empty());

    std::fs::write(&cfg, "mesh = icosphere:2:1\nsurprise = 1\n").unwrap();
    let out = hkflow(&["diagnose", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_kind(&out), "InvalidConfig");
}

#[test]
fn blowup_requires_a_blown_up_run() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("short");
    let out = hkflow(&[
        "flow",
        "--mesh",
        "icosphere:2:1",
        "--stop_t",
        "0.01",
        "--output_dir",
        run.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let out = hkflow(&["blowup", run.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_kind(&out), "NoBlowup");
    let out = hkflow(&["blowup", dir.path().join("absent").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn coarse_blowup_run_is_reproducible_and_valid() {
    let dir = tempfile::tempdir().unwrap();
    let schema = compiled_schema();
    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let run = dir.path().join(name);
        let out = hkflow(&[
            "flow",
            "--mesh",
            "icosphere:3:1",
            "--blowup_threshold",
            "1e5",
            "--checks",
            "all",
            "--snapshot_stride",
            "10",
            "--output_dir",
            run.to_str().unwrap(),
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        let out = hkflow(&["blowup", run.to_str().unwrap()]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        runs.push(run);
    }
    let files = files_under(&runs[0]);
    assert_eq!(files, files_under(&runs[1]));
    for f in &files {
        let (a, b) = (
            std::fs::read(runs[0].join(f)).unwrap(),
            std::fs::read(runs[1].join(f)).unwrap(),
        );
        assert!(a == b, "{} differs between identical runs", f.display());
        if f.extension().is_some_and(|e| e == "json") {
            let errs = schema_errors(&schema, &read_json(&runs[0].join(f)));
            assert!(errs.is_empty(), "{}: {errs:?}", f.display());
        }
    }
    let report = read_json(&runs[0].join("report.json"));
    let t_final = report["run"]["final_time"].as_f64().unwrap();
    assert!((t_final - 1.0 / 12.0).abs() / (1.0 / 12.0) < 0.02);
    assert_eq!(report["all_hold"], Value::Bool(true));
    assert_eq!(report["error_count"], 0);
}
