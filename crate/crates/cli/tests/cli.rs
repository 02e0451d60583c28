use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_cauchycp"));
    c.env_remove("CAUCHYCP_SEED").env("RUST_LOG", "error");
    c
}

fn gastric() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/gastric.csv")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn error_json(out: &Output) -> Value {
    assert!(!out.status.success());
    serde_json::from_slice(&out.stderr).unwrap()
}

#[test]
fn test_reports_every_method_with_provenance() {
    let g = gastric();
    let out = run(&["test", "-i", g.to_str().unwrap(), "--methods", "cauchycp,rmst,wkm,logrank"]);
    let v = stdout_json(&out);
    let tests = v["results"]["tests"].as_array().unwrap();
    let names: Vec<&str> = tests.iter().map(|t| t["method"].as_str().unwrap()).collect();
    assert_eq!(names, ["cauchycp", "rmst", "wkm", "logrank"]);
    for t in tests {
        let p = t["p_value"].as_f64().unwrap();
        assert!(p > 0.0 && p < 1.0);
    }
    let per_point = v["results"]["cauchycp"]["per_point"].as_array().unwrap();
    assert_eq!(per_point.len(), 4);
    assert_eq!(v["results"]["cauchycp"]["most_informative"], 2);
    assert_eq!(v["provenance"]["seed"], 20_220_701);
    assert_eq!(v["provenance"]["config_hash"].as_str().unwrap().len(), 64);
    // summary carries 6 significant digits, results full precision
    let full = v["results"]["cauchycp"]["p_value"].as_f64().unwrap();
    let short = v["summary"]["cauchycp"]["p_value"].as_f64().unwrap();
    assert_eq!(short, format!("{full:.5e}").parse::<f64>().unwrap());
}

#[test]
fn test_is_bit_reproducible() {
    let g = gastric();
    let args = ["test", "-i", g.to_str().unwrap(), "--methods", "cauchycp,maxcombo", "--seed", "7"];
    assert_eq!(run(&args).stdout, run(&args).stdout);
}

#[test]
fn explicit_changepoints_and_csv() {
    let g = gastric();
    let out = run(&["test", "-i", g.to_str().unwrap(), "--changepoints", "0,355", "--format", "csv"]);
    assert!(out.status.success());
    let s = String::from_utf8(out.stdout).unwrap();
    assert!(s.starts_with("# version: "));
    let rows: Vec<&str> = s.lines().filter(|l| l.starts_with("changepoint,")).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[1].starts_with("changepoint,cauchycp,355,2,"));
}

#[test]
fn simulate_same_seed_same_file() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let out = run(&["simulate", "-n", "50", "--h-l", "0.6", "--h-r", "1.6", "--seed", "3", "--format", "csv", "-o", p.to_str().unwrap()]);
        assert!(out.status.success());
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    // the provenance lines are comments, so the file reads back as a dataset
    let v = stdout_json(&run(&["test", "-i", a.to_str().unwrap(), "--methods", "logrank"]));
    assert_eq!(v["results"]["n"], 50);
}

#[test]
fn seed_from_environment() {
    let run_env = |seed: &str| bin().args(["simulate", "-n", "20"]).env("CAUCHYCP_SEED", seed).output().unwrap();
    let a = run_env("11");
    let b = run_env("12");
    assert_eq!(stdout_json(&a)["provenance"]["seed"], 11);
    assert_ne!(stdout_json(&a)["records"], stdout_json(&b)["records"]);
}

#[test]
fn empty_csv_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("empty.csv");
    fs::write(&p, "").unwrap();
    let out = run(&["test", "-i", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out)["error"]["kind"], "empty_dataset");
}

#[test]
fn malformed_row_names_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.csv");
    fs::write(&p, "time,event,x\n1,1,0\n2,1,1\n3,maybe,0\n").unwrap();
    let e = error_json(&run(&["test", "-i", p.to_str().unwrap()]));
    assert_eq!(e["error"]["kind"], "parse");
    assert!(e["error"]["message"].as_str().unwrap().contains("line 4"), "{e}");
}

#[test]
fn unknown_method_is_usage_error() {
    let g = gastric();
    let out = run(&["test", "-i", g.to_str().unwrap(), "--methods", "cauchycp,bogus"]);
    assert_eq!(out.status.code(), Some(2));
    let msg = error_json(&out)["error"]["message"].as_str().unwrap().to_string();
    for m in ["cauchycp", "maxcombo", "rmst", "wkm"] {
        assert!(msg.contains(m), "{msg}");
    }
}

#[test]
fn missing_subcommand_is_usage_error() {
    let out = run(&[]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"]["kind"], "usage");
}

fn small_config(dir: &Path) -> PathBuf {
    let p = dir.join("study.toml");
    fs::write(
        &p,
        "seed = 5\nn_reps = 40\nn_list = [60]\nalpha_list = [0.05, 0.5]\nmethods = [\"cauchycp\", \"rmst\"]\nn_runs = 10\n\n[[hr]]\nconfig = \"one\"\np = 1\nh_l = 0.5\nh_r = 1.5\n",
    )
    .unwrap();
    p
}

#[test]
fn type1_independent_of_workers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let a = run(&["type1", "-c", cfg.to_str().unwrap(), "--workers", "1"]);
    let b = run(&["type1", "-c", cfg.to_str().unwrap(), "--workers", "3"]);
    assert_eq!(a.stdout, b.stdout);
    let v = stdout_json(&a);
    assert_eq!(v["provenance"]["seed"], 5);
    assert_eq!(v["results"].as_array().unwrap().len(), 4);
}

#[test]
fn power_csv_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = run(&["power", "-c", cfg.to_str().unwrap(), "--format", "csv"]);
    assert!(out.status.success());
    let s = String::from_utf8(out.stdout).unwrap();
    let body: Vec<&str> = s.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body[0], "scenario,n_total,method,alpha,estimate,mc_se,n_reps,n_failed");
    assert_eq!(body.len(), 3);
}

#[test]
fn timing_rows_are_finite() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let v = stdout_json(&run(&["timing", "-c", cfg.to_str().unwrap()]));
    for r in v["results"].as_array().unwrap() {
        let t = r["mean_seconds"].as_f64().unwrap();
        assert!(t.is_finite() && t >= 0.0);
    }
}

#[test]
fn bad_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    fs::write(&p, "n_list = [100]\nunknown_key = 1\n").unwrap();
    assert_eq!(error_json(&run(&["type1", "-c", p.to_str().unwrap()]))["error"]["kind"], "config");
}

#[test]
fn batch_runs_markers() {
    let dir = tempfile::tempdir().unwrap();
    let markers = dir.path().join("m.csv");
    let g = gastric();
    let n = fs::read_to_string(&g).unwrap().lines().filter(|l| !l.starts_with('#')).count() - 1;
    let mut s = String::from("a,b,flat\n");
    for i in 0..n {
        s.push_str(&format!("{},{},1\n", i % 3, (i * 7) % 2));
    }
    fs::write(&markers, s).unwrap();
    let v = stdout_json(&run(&["batch", "-i", g.to_str().unwrap(), "--markers", markers.to_str().unwrap()]));
    let rows = v["results"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[2]["status"], "monomorphic");
    assert!(rows[0]["p_value"].as_f64().is_some());
}
