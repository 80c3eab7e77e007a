use std::process::{Command, Output};

use serde_json::Value;

fn latvol(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_latvol"))
        .args(args)
        .env_remove("LATVOL_THREADS")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

const UNIT_TET: &str = "0,0,0,1,0,0,0,1,0,0,0,1";

#[test]
fn envelope_fields() {
    let v = json(&latvol(&["bondvol", "--tet", UNIT_TET, "--dir", "1,0,0"]));
    assert_eq!(v["format_version"], "latvol-output/1");
    assert_eq!(v["command"], "bondvol");
    assert_eq!(v["config"]["dir"], serde_json::json!([1, 0, 0]));
    assert!((v["result"]["len"].as_f64().unwrap() - 0.25).abs() < 1e-12);
}

#[test]
fn degenerate_tet_has_zero_len() {
    let v = json(&latvol(&["bondvol", "--tet", "0,0,0,1,0,0,0,1,0,1,1,0", "--dir", "1,1,0"]));
    assert_eq!(v["result"]["len"].as_f64().unwrap(), 0.0);
}

#[test]
fn oracle_agrees_and_direction_scaling_is_invisible() {
    let tet = "0,0,0,3,1,-1,-1,4,2,2,-2,5";
    let a = json(&latvol(&["bondvol", "--tet", tet, "--dir", "1,-2,1", "--oracle"]));
    let b = json(&latvol(&["bondvol", "--tet", tet, "--dir", "-3,6,-3"]));
    assert!(a["result"]["abs_diff"].as_f64().unwrap() <= 1e-9);
    let (la, lb) = (a["result"]["len"].as_f64().unwrap(), b["result"]["len"].as_f64().unwrap());
    assert!((la - lb).abs() <= 1e-12 * la.abs().max(1.0), "{la} vs {lb}");
}

#[test]
fn bad_input_exits_2() {
    for args in [
        vec!["bondvol", "--tet", UNIT_TET, "--dir", "0,0,0"],
        vec!["bondvol", "--tet", "0,0,0,1", "--dir", "1,0,0"],
        vec!["bondvol", "--dir", "1,0,0"],
        vec!["patchtest", "--n", "3", "--k", "3"],
        vec!["patchtest", "--f", "1,0,0"],
        vec!["stability", "--n", "3", "--k", "1"],
    ] {
        let out = latvol(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn budget_exhaustion_is_reported() {
    let out = latvol(&["bondvol", "--tet", "0,0,0,50,0,0,0,50,0,0,0,50", "--dir", "1,0,0", "--oracle", "--budget", "10"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("budget"));
}

#[test]
fn patch_test_separates_the_two_weightings() {
    let f = "1,0.01,0.02,0,1,0.015,0,0,1";
    let consistent = json(&latvol(&["patchtest", "--n", "3", "--k", "2", "--f", f, "--assert"]));
    let rel = consistent["result"]["relative"].as_f64().unwrap();
    assert!(rel <= 1e-10, "{rel}");

    let out = latvol(&["patchtest", "--n", "3", "--k", "2", "--f", f, "--cauchy-born", "--assert"]);
    assert_eq!(out.status.code(), Some(1));
    let cb: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(cb["result"]["relative"].as_f64().unwrap() >= 1e-3);
}

#[test]
fn model_document_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    json(&latvol(&["patchtest", "--n", "3", "--k", "2", "--model-out", path.to_str().unwrap()]));
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(doc["format_version"], "latvol-model/1");
    let n = doc["omega_value"].as_array().unwrap().len();
    assert_eq!(n, doc["omega_tet"].as_array().unwrap().len());
    assert_eq!(n, doc["tets"].as_array().unwrap().len() * doc["neighbors"].as_array().unwrap().len());
}

#[test]
fn converge_writes_one_row_per_pair() {
    let out = latvol(&["converge", "--n", "4", "--k", "2,3,4,9"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body[0], "N,K,DoF,w1inf_error,energy_error");
    assert_eq!(body.len(), 3);
    let err = |row: &str| -> f64 { row.split(',').nth(3).unwrap().parse().unwrap() };
    assert!(err(body[2]) < err(body[1]));
    assert!(text.lines().any(|l| l.starts_with("# slopes N=4")));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"n": 3, "k": 2, "step": 0.2, "k_grid": 6}"#).unwrap();
    let csv = dir.path().join("s.csv");
    let out = latvol(&["--config", cfg.to_str().unwrap(), "--out", csv.to_str().unwrap(), "stability", "--step", "0.1", "--assert"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.contains(r#""step":0.1"#) && text.contains(r#""k_grid":6"#));
    let rows = text.lines().filter(|l| l.ends_with(",coupled")).count();
    assert_eq!(rows, 25);
    assert_eq!(text.lines().filter(|l| l.ends_with(",fourier")).count(), 25);

    std::fs::write(&cfg, r#"{"n": 3, "typo": 1}"#).unwrap();
    assert_eq!(latvol(&["--config", cfg.to_str().unwrap(), "stability"]).status.code(), Some(2));
}

#[test]
fn output_is_deterministic_across_thread_counts() {
    let run = |threads: &str| {
        let out = latvol(&["--threads", threads, "converge", "--n", "4", "--k", "2"]);
        assert!(out.status.success());
        out.stdout
    };
    assert_eq!(run("1"), run("3"));
}

#[test]
fn selftest_passes() {
    let v = json(&latvol(&["selftest", "--tets", "5", "--seed", "7"]));
    assert_eq!(v["result"]["oracle"]["pass"], true);
    assert_eq!(v["result"]["patch"]["pass"], true);
}
