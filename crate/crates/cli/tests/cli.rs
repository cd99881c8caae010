use std::path::Path;
use std::process::Command;

use serde_json::{json, Value};

fn run(cmd: &str, config: &Value, dir: &Path) -> i32 {
    let cfg = dir.join("config.json");
    std::fs::write(&cfg, config.to_string()).unwrap();
    Command::new(env!("CARGO_BIN_EXE_nahmlab"))
        .args([cmd, "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .status()
        .unwrap()
        .code()
        .unwrap()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("out/manifest.json")).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|x| x.unwrap()).collect()
}

#[test]
fn spectrum_of_flat_line_bundle() {
    let d = tempfile::tempdir().unwrap();
    let code = run("spectrum", &json!({ "field": { "kind": "flat" }, "degree": 4 }), d.path());
    assert_eq!(code, 0);
    let mut r = csv::Reader::from_path(d.path().join("out/spectrum.csv")).unwrap();
    let headers = r.headers().unwrap().clone();
    let col = headers.iter().position(|h| h == "half_lambda_sq").unwrap();
    let first: f64 = r.records().next().unwrap().unwrap()[col].parse().unwrap();
    assert!((first - 1.0 / 3.0).abs() < 1e-8);
    let m = manifest(d.path());
    assert_eq!(m["exit_code"], 0);
    assert_eq!(m["command"], "spectrum");
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    assert!(m["library_version"].is_string());
    assert!(m["wall_time_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn exterior_index_is_zero() {
    let d = tempfile::tempdir().unwrap();
    let cfg = json!({ "field": { "kind": "flat" }, "degree": 5, "points": [[1.5, 0.0, 0.0, 0.0]] });
    assert_eq!(run("index", &cfg, d.path()), 0);
    let rows = csv_rows(&d.path().join("out/index.csv"));
    let mut r = csv::Reader::from_path(d.path().join("out/index.csv")).unwrap();
    let h = r.headers().unwrap().clone();
    let at = |name: &str| h.iter().position(|x| x == name).unwrap();
    assert_eq!(&rows[0][at("index")], "0");
    assert_eq!(&rows[0][at("dim_ker")], "0");
}

#[test]
fn boundary_point_is_a_config_error() {
    let d = tempfile::tempdir().unwrap();
    let cfg = json!({ "field": { "kind": "flat" }, "degree": 3, "points": [[0.0, 1.0, 0.0, 0.0]] });
    assert_eq!(run("index", &cfg, d.path()), 2);
}

#[test]
fn nonpositive_scale_exits_2_with_manifest() {
    let d = tempfile::tempdir().unwrap();
    let code = run("spectrum", &json!({ "field": { "kind": "bpst", "rho": 0.0 } }), d.path());
    assert_eq!(code, 2);
    let m = manifest(d.path());
    assert_eq!(m["exit_code"], 2);
    assert!(m["reason"].as_str().unwrap().contains("rho"));
}

#[test]
fn unknown_key_exits_2() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run("flat-adhm", &json!({ "field": { "kind": "flat" }, "degre": 3 }), d.path()), 2);
}

#[test]
fn missing_config_exits_2() {
    let d = tempfile::tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_nahmlab"))
        .args(["spectrum", "--config"])
        .arg(d.path().join("absent.json"))
        .arg("--out")
        .arg(d.path().join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn unresolved_quadrature_exits_3() {
    let d = tempfile::tempdir().unwrap();
    let cfg = json!({
        "field": { "kind": "bpst", "rho": 0.02 },
        "degree": 1,
        "schedule": [0.05, 0.02],
        "quad": { "nr": 2, "nt1": 4, "nt2": 4, "nphi": 4 },
        "thresholds": { "energy_tol": 1e-12 },
    });
    assert_eq!(run("family", &cfg, d.path()), 3);
}

#[test]
fn flat_adhm_tables() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run("flat-adhm", &json!({ "field": { "kind": "flat" }, "degree": 3 }), d.path()), 0);
    let rows = csv_rows(&d.path().join("out/bergmann.csv"));
    let dims: Vec<usize> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(dims, vec![2, 8, 20, 40]);
    let adhm: Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("out/adhm.json")).unwrap()).unwrap();
    assert_eq!(adhm["x"].as_array().unwrap().len(), 4);
}

#[test]
fn reconstruct_writes_tables() {
    let d = tempfile::tempdir().unwrap();
    let cfg = json!({
        "field": { "kind": "flat" },
        "degree": 4,
        "points": [[0.0, 0.0, 0.0, 0.0], [0.0, 1.5, 0.0, 0.0]],
        "samples": { "correlator_pairs": 2 },
    });
    assert_eq!(run("reconstruct", &cfg, d.path()), 0);
    assert_eq!(csv_rows(&d.path().join("out/fibers.csv")).len(), 2);
    assert_eq!(csv_rows(&d.path().join("out/correlator.csv")).len(), 2);
    assert_eq!(csv_rows(&d.path().join("out/laplacian.csv")).len(), 2);
}

#[test]
fn rerun_is_byte_identical() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let cfg = json!({ "field": { "kind": "bpst", "rho": 0.3 }, "degree": 2 });
    assert_eq!(run("spectrum", &cfg, d1.path()), 0);
    assert_eq!(run("spectrum", &cfg, d2.path()), 0);
    for f in ["spectrum.csv", "spectrum.json"] {
        assert_eq!(std::fs::read(d1.path().join("out").join(f)).unwrap(), std::fs::read(d2.path().join("out").join(f)).unwrap());
    }
    assert_eq!(manifest(d1.path())["config_hash"], manifest(d2.path())["config_hash"]);
}
