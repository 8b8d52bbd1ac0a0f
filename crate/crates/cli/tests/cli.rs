use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn mfsbp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfsbp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_with(command: &str, config: &Value, dir: &Path, extra: &[&str]) -> Output {
    let cfg = dir.join("in.json");
    std::fs::write(&cfg, config.to_string()).unwrap();
    let out = dir.join("out");
    let mut args = vec![
        command,
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    mfsbp(&args)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn operator_nodes(path: &Path) -> usize {
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    doc["p_diag"].as_array().unwrap().len()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect()
}

#[test]
fn build_trig_triangle_has_32_nodes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "space": {"name": "F2", "omega": std::f64::consts::PI},
        "operator": {"nodes": {"fixed": {"per_part": 8, "interior": 8}}}
    });
    let o = run_with("build", &cfg, dir.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("out");
    assert_eq!(operator_nodes(&out.join("operator.json")), 32);
    let report = std::fs::read_to_string(out.join("validation.txt")).unwrap();
    assert!(report.contains("sbp identity"));
    let resolved: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(resolved["command"], "build");
    assert_eq!(resolved["space"]["name"], "F2");
}

#[test]
fn build_rbf_triangle_has_30_nodes_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "space": {"name": "F3", "center": [1.0 / 3.0, 1.0 / 3.0], "diameter": 0.2},
        "operator": {"nodes": {"fixed": {"per_part": 7, "interior": 9}}}
    });
    let o = run_with("build", &cfg, dir.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let path = dir.path().join("out/operator.json");
    assert_eq!(operator_nodes(&path), 30);
    let first = std::fs::read(&path).unwrap();
    let o = run_with("build", &cfg, dir.path(), &[]);
    assert!(o.status.success());
    assert_eq!(
        std::fs::read(&path).unwrap(),
        first,
        "rebuild must be byte-identical"
    );

    // A stored operator validates from file.
    let o = run_with(
        "validate",
        &json!({}),
        dir.path(),
        &["--operator-file", path.to_str().unwrap()],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("result: PASS"));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_with("build", &json!({"spaec": {"name": "F1"}}), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("config error"), "{}", stderr(&o));

    let o = run_with("solve", &json!({"solver": {"dt": -1.0}}), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));

    let o = run_with("solve", &json!({"command": "build"}), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));

    let o = mfsbp(&["build", "--config", "/nonexistent/config.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn construction_failure_exits_3_and_names_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    // Three nodes per edge cannot integrate sixth-degree products exactly.
    let cfg = json!({
        "operator": {
            "nodes": {"fixed": {"per_part": 3, "interior": 10}},
            "pocs": {"strict": true}
        }
    });
    let o = run_with("build", &cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("quadrature"), "{}", stderr(&o));
}

#[test]
fn failing_validation_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    // The trig space has no exact surface quadrature on 8 nodes per edge, so
    // the boundary exactness check fails while the build itself succeeds.
    let cfg = json!({
        "space": {"name": "F2", "omega": std::f64::consts::PI},
        "operator": {"nodes": {"fixed": {"per_part": 8, "interior": 12}}}
    });
    let o = run_with("build", &cfg, dir.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run_with("validate", &cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("validation"));
}

#[test]
fn single_k_convergence_has_empty_orders() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "problem": {"final_time": 0.05},
        "solver": {"dt": 0.005}
    });
    let o = run_with("convergence", &cfg, dir.path(), &["--k-list", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv_rows(&dir.path().join("out/convergence.csv"));
    assert_eq!(rows.len(), 1);
    let r = &rows[0];
    assert_eq!(r[0], "2");
    let e_poly: f64 = r[2].parse().unwrap();
    let e_trig: f64 = r[3].parse().unwrap();
    assert!(e_poly.is_finite() && e_poly > 0.0);
    assert!(e_trig.is_finite() && e_trig > 0.0);
    assert_eq!(r[5], "");
    assert_eq!(r[6], "");
    assert!(dir.path().join("out/convergence_K02.csv").exists());
}

#[test]
fn two_k_convergence_reports_orders() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({"problem": {"final_time": 0.05}, "solver": {"dt": 0.005}});
    let o = run_with("convergence", &cfg, dir.path(), &["--k-list", "2,3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv_rows(&dir.path().join("out/convergence.csv"));
    assert_eq!(rows.len(), 2);
    let order: f64 = rows[1][5].parse().unwrap();
    let expect = (rows[0][2].parse::<f64>().unwrap() / rows[1][2].parse::<f64>().unwrap()).ln()
        / (3.0_f64 / 2.0).ln();
    assert!((order - expect).abs() < 1e-12);
}

#[test]
fn quadrature_volume_weights_sum_to_area() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({"operator": {"nodes": {"fixed": {"per_part": 8, "interior": 21}}}});
    let o = run_with("quadrature", &cfg, dir.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("out");
    let vol = csv_rows(&out.join("volume_weights.csv"));
    assert_eq!(vol.len(), 45);
    let sum: f64 = vol.iter().map(|r| r[2].parse::<f64>().unwrap()).sum();
    assert!((sum - 0.5).abs() < 1e-11, "{sum}");
    let surf = csv_rows(&out.join("surface_weights.csv"));
    assert_eq!(surf.len(), 24);
    let worst = csv_rows(&out.join("exactness.csv"))
        .iter()
        .map(|r| r[6].parse::<f64>().unwrap())
        .fold(0.0, f64::max);
    assert!(worst < 1e-10, "{worst}");
}

#[test]
fn disk_surface_weights_reproduce_divergence_identity() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "domain": {"kind": "disk", "center": [0.5, 0.5], "radius": 0.5},
        "operator": {"nodes": {"fixed": {"per_part": 12, "interior": 25}}}
    });
    let o = run_with("quadrature", &cfg, dir.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    // ∮ x n_x ds equals the area π/4.
    let integral: f64 = csv_rows(&dir.path().join("out/surface_weights.csv"))
        .iter()
        .map(|r| {
            let v: Vec<f64> = r[1..].iter().map(|c| c.parse().unwrap()).collect();
            v[4] * v[0] * v[2]
        })
        .sum();
    assert!(
        (integral - std::f64::consts::FRAC_PI_4).abs() < 1e-10,
        "{integral}"
    );
}

#[test]
fn solve_writes_history_and_solution() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "domain": {"kind": "rectangle", "min": [0.0, 0.0], "max": [1.0, 1.0]},
        "operator": {"nodes": {"fixed": {"per_part": 8, "interior": 21}}},
        "solver": {"dt": 0.001, "diagnostics_every": 10}
    });
    let o = run_with(
        "solve",
        &cfg,
        dir.path(),
        &["--k", "2", "--final-time", "0.02"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("out");
    let hist = csv_rows(&out.join("history.csv"));
    assert_eq!(hist.len(), 3);
    assert_eq!(hist[2][0].parse::<f64>().unwrap(), 0.02);
    let sol = csv_rows(&out.join("solution.csv"));
    assert_eq!(sol.len(), 8 * 45);
    let err: f64 = hist[2][1].parse().unwrap();
    assert!(err < 1e-2, "{err}");
    // Every number uses 17 significant digits.
    assert!(hist[1]
        .iter()
        .all(|c| c.contains('e') && c.split('e').next().unwrap().len() >= 18));
}
