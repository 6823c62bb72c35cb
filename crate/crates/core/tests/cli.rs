use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_ising-cavity");

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, text).unwrap();
    p
}

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .arg("--out")
        .arg(dir.join("out"))
        .env_remove("ISING_CAVITY_WORKERS")
        .output()
        .unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn cfg_arg(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

#[test]
fn critical_reports_moments_and_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"model": {"kind": "power_law", "tau": 2.5}, "seed": 3}"#);
    let out = run(dir.path(), &["critical", "--config", &cfg_arg(&cfg)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let j = read_json(&dir.path().join("out/critical.json"));
    assert_eq!(j["nu"], "inf");
    assert_eq!(j["beta_c"], 0.0);
    assert_eq!(j["provenance"]["seed"], 3);
    assert_eq!(j["provenance"]["config_sha256"].as_str().unwrap().len(), 64);
    assert!(j["provenance"]["version"].is_string());

    let cfg = write_config(dir.path(), r#"{"model": {"kind": "regular", "d": 3}, "seed": 3}"#);
    let out = run(dir.path(), &["critical", "--config", &cfg_arg(&cfg)]);
    assert_eq!(out.status.code(), Some(0));
    let j = read_json(&dir.path().join("out/critical.json"));
    assert!((j["beta_c"].as_f64().unwrap() - 0.5f64.atanh()).abs() < 1e-15);
    assert!(String::from_utf8_lossy(&out.stdout).contains("beta_c"));
}

#[test]
fn usage_errors_exit_64() {
    let dir = tempfile::tempdir().unwrap();
    let no_seed = write_config(dir.path(), r#"{"model": {"kind": "poisson", "lambda": 3}}"#);
    let out = run(dir.path(), &["critical", "--config", &cfg_arg(&no_seed)]);
    assert_eq!(out.status.code(), Some(64));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
    // --seed fills the gap
    let out = run(dir.path(), &["critical", "--config", &cfg_arg(&no_seed), "--seed", "1"]);
    assert_eq!(out.status.code(), Some(0));

    let bad = write_config(dir.path(), "{\n  \"model\": {\"kind\": \"poisson\", \"lambda\": 3},\n  \"seed\": 1,\n  \"sweeep\": {}\n}");
    let out = run(dir.path(), &["sweep", "--config", &cfg_arg(&bad)]);
    assert_eq!(out.status.code(), Some(64));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 4") && err.contains("sweeep"), "{err}");

    let out = run(dir.path(), &["critical"]);
    assert_eq!(out.status.code(), Some(64));
    let out = run(dir.path(), &["frobnicate", "--config", &cfg_arg(&bad)]);
    assert_eq!(out.status.code(), Some(64));
}

const SWEEP: &str = r#"{
  "model": {"kind": "poisson", "lambda": 3},
  "seed": 17,
  "solver": {"population_size": 8192, "shape_tol": 0.03},
  "sweep": {
    "betas": [0.2, 0.45],
    "fields": [0.05],
    "path_mc": {"n_spines": 4000},
    "magnetization_samples": 4096,
    "snapshots": 4
  }
}"#;

#[test]
fn sweep_is_byte_identical_across_runs_and_workers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SWEEP);
    let mut outputs = Vec::new();
    for workers in ["1", "3", "1"] {
        let out = run(dir.path(), &["sweep", "--config", &cfg_arg(&cfg), "--workers", workers]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(std::fs::read(dir.path().join("out/sweep.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);

    let text = String::from_utf8(outputs[0].clone()).unwrap();
    assert!(text.contains("# config_sha256: "));
    assert!(text.contains("# seed: 17"));
    assert!(text.contains("# version: "));
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "beta,B,M,M_se,chi,chi_se,chi_method,trunc_bound,seed,status");
    assert_eq!(rows.len(), 3);
    assert!(rows[1].contains("ClosedFormSubcritical"));
    assert!(rows[2].contains("PathMC"));

    // the master seed changes every row
    let out = run(dir.path(), &["sweep", "--config", &cfg_arg(&cfg), "--seed", "18"]);
    assert_eq!(out.status.code(), Some(0));
    assert_ne!(std::fs::read(dir.path().join("out/sweep.csv")).unwrap(), outputs[0]);
}

#[test]
fn sweep_with_a_failed_point_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    // supercritical at B = 0 has no solver path
    let text = SWEEP.replace(r#""betas": [0.2, 0.45],
    "fields": [0.05],"#, r#""grid": [[0.45, 0.0], [0.45, 0.05]],"#);
    let cfg = write_config(dir.path(), &text);
    let out = run(dir.path(), &["sweep", "--config", &cfg_arg(&cfg)]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(rows[1].contains("NaN") && !rows[1].ends_with(",ok"));
    assert!(rows[2].ends_with(",ok"));
}

#[test]
fn unconverged_point_keeps_its_magnetization() {
    let dir = tempfile::tempdir().unwrap();
    let text = SWEEP.replace(r#""shape_tol": 0.03"#, r#""shape_tol": 0.03, "max_iters": 5"#);
    let cfg = write_config(dir.path(), &text);
    let out = run(dir.path(), &["sweep", "--config", &cfg_arg(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    let csv = std::fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap();
    let row = csv.lines().filter(|l| !l.starts_with('#')).nth(2).unwrap();
    let cols: Vec<&str> = row.split(',').collect();
    assert!(cols[2].parse::<f64>().unwrap() > 0.0, "{row}");
    assert_eq!(cols[4], "NaN");
    assert!(cols[9].starts_with("non_convergence"), "{row}");
}

#[test]
fn oracle_passes_and_negative_control_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"seed": 5, "oracle": {"suite": {"trees": 20, "graphs": 4}}}"#,
    );
    let out = run(dir.path(), &["oracle", "--config", &cfg_arg(&cfg)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let j = read_json(&dir.path().join("out/oracle.json"));
    assert_eq!(j["report"]["passed"], true);

    let cfg = write_config(
        dir.path(),
        r#"{"seed": 5, "oracle": {"suite": {"trees": 20, "graphs": 4, "corrupt_xi": true}}}"#,
    );
    let out = run(dir.path(), &["oracle", "--config", &cfg_arg(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
    let j = read_json(&dir.path().join("out/oracle.json"));
    let checks = j["report"]["checks"].as_array().unwrap();
    let gks = checks.iter().find(|c| c["name"] == "gks_sandwich").unwrap();
    assert_eq!(gks["passed"], false);
    assert!(gks["failing_instance"]["edge_list"].is_string());
}

#[test]
fn oracle_rejects_oversized_graph_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut edges = String::from("# path on 25 vertices\n25 24\n");
    for i in 0..24 {
        edges.push_str(&format!("{i} {}\n", i + 1));
    }
    std::fs::write(dir.path().join("big.txt"), edges).unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"seed": 5, "oracle": {"suite": {"trees": 5, "graphs": 2},
            "graphs": [{"path": "big.txt", "beta": 0.3, "B": 0.1},
                       {"edge_list": "3 2\n0 1\n1 2\n", "beta": 0.3, "B": 0.1}]}}"#,
    );
    let out = run(dir.path(), &["oracle", "--config", &cfg_arg(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
    let j = read_json(&dir.path().join("out/oracle.json"));
    let checks = j["report"]["checks"].as_array().unwrap();
    let pre = checks.iter().find(|c| c["name"] == "enumeration_precondition").unwrap();
    assert_eq!(pre["passed"], false);
    assert!(pre["message"].as_str().unwrap().contains("25"));
    // everything that could be enumerated still agrees
    for c in checks.iter().filter(|c| c["name"] != "enumeration_precondition") {
        assert_eq!(c["passed"], true, "{c}");
    }
}

#[test]
fn exponents_report_and_rejection() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"model": {"kind": "regular", "d": 3}, "seed": 1, "exponents": {"fits": ["gamma"]}}"#,
    );
    let out = run(dir.path(), &["exponents", "--config", &cfg_arg(&cfg)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let j = read_json(&dir.path().join("out/exponents.json"));
    let fit = &j["fits"][0];
    for key in ["exponent", "estimate", "ci95", "r2", "window", "log_correction", "points"] {
        assert!(!fit[key].is_null(), "missing {key}");
    }
    assert_eq!(fit["exponent"], "gamma");
    assert!((fit["estimate"].as_f64().unwrap() - 1.0).abs() < 0.02);
    assert_eq!(j["provenance"]["seed"], 1);

    let cfg = write_config(
        dir.path(),
        r#"{"model": {"kind": "regular", "d": 3}, "seed": 1,
            "exponents": {"fits": ["gamma"], "settings": {"min_r_squared": 1.0}}}"#,
    );
    let out = run(dir.path(), &["exponents", "--config", &cfg_arg(&cfg)]);
    assert_eq!(out.status.code(), Some(3));
    let j = read_json(&dir.path().join("out/exponents.json"));
    assert_eq!(j["fits"].as_array().unwrap().len(), 0);
    assert!(j["failures"][0]["fit"]["points"].is_array());
}
