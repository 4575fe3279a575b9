use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn muonlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_muonlab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn repo_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_owned()
}

#[test]
fn implicit_bias_default_converges() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("bias");
    let res = muonlab(&["implicit-bias", "--out", &out_arg(&out), "--set", "steps=20000"]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["all_converged"], true);
    for run in summary["runs"].as_array().unwrap() {
        assert!(run["final_distance"].as_f64().unwrap() < 1e-3);
        assert!(out.join(run["trajectory"].as_str().unwrap()).is_file());
    }
    assert!(out.join("manifest.json").is_file());
}

#[test]
fn seeds_fan_out() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("bias");
    let res = muonlab(&[
        "implicit-bias", "--out", &out_arg(&out), "--seeds", "1,2,3", "--set", "steps=2000", "--set", "tol=1.0",
    ]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    for s in 1..=3 {
        assert!(out.join(format!("seed{s}")).is_dir());
    }
    assert_eq!(read_json(&out.join("manifest.json"))["seeds"], serde_json::json!([1, 2, 3]));
}

#[test]
fn non_convergence_exits_4_with_outputs() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("bias");
    let res = muonlab(&["implicit-bias", "--out", &out_arg(&out), "--set", "steps=3"]);
    assert_eq!(res.status.code(), Some(4));
    assert_eq!(read_json(&out.join("summary.json"))["all_converged"], false);
}

#[test]
fn malformed_config_exits_2_without_outputs() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("bad.json");
    fs::write(&cfg, r#"{"instances": "five"}"#).unwrap();
    let out = tmp.path().join("curves");
    let res = muonlab(&["budget-curves", "--config", cfg.to_str().unwrap(), "--out", &out_arg(&out)]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!out.exists());

    let res = muonlab(&["budget-curves", "--out", &out_arg(&out), "--set", "no_such_field=1"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!out.exists());

    let res = muonlab(&["budget-curves"]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn budget_curves_manifest_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let cfg = repo_file("configs/budget_curves.json");
    let run = |name: &str| {
        let out = tmp.path().join(name);
        let res = muonlab(&["budget-curves", "--config", cfg.to_str().unwrap(), "--out", &out_arg(&out), "--set", "instances=4"]);
        assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
        out
    };
    let (a, b) = (run("a"), run("b"));
    let (ma, mb) = (read_json(&a.join("manifest.json")), read_json(&b.join("manifest.json")));
    assert_eq!(ma["files"], mb["files"]);
    assert_eq!(ma["config_digest"], mb["config_digest"]);
    assert_eq!(fs::read(a.join("curves.csv")).unwrap(), fs::read(b.join("curves.csv")).unwrap());

    let csv = fs::read_to_string(a.join("curves.csv")).unwrap();
    let mut rows = csv::Reader::from_reader(csv.as_bytes());
    let header = rows.headers().unwrap().clone();
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    for rec in rows.records() {
        let rec = rec.unwrap();
        let get = |name: &str| rec[col(name)].parse::<f64>().unwrap();
        assert!((get("closed_max") - get("oracle_max")).abs() <= 1e-4);
        assert!((get("closed_spec") - get("oracle_spec")).abs() <= 1e-4);
    }
}

#[test]
fn ns_scan_with_schedule_file() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("ns");
    let schedule = repo_file("schedules/polar_express_5.json");
    let res = muonlab(&["ns-scan", "--out", &out_arg(&out), "--schedule", schedule.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let env = read_json(&out.join("envelope.json"));
    let (lo, hi) = (env["envelope"]["min"].as_f64().unwrap(), env["envelope"]["max"].as_f64().unwrap());
    assert!(lo > 0.8 && hi < 1.2, "{lo} {hi}");

    let empty = tmp.path().join("empty");
    let res = muonlab(&["ns-scan", "--out", &out_arg(&empty), "--set", "points=0"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!empty.exists());
}

#[test]
fn spectra_of_diagonal() {
    let tmp = TempDir::new().unwrap();
    let w = tmp.path().join("w.json");
    fs::write(&w, r#"{"m": 2, "n": 2, "entries": [2.0, 0.0, 0.0, 1.0]}"#).unwrap();
    let res = muonlab(&["spectra", "--weights", w.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0));
    let report: Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(report["report"]["stable_rank"].as_f64().unwrap(), 1.25);
    assert!((report["report"]["svd_entropy"].as_f64().unwrap() - 0.7219).abs() < 1e-4);

    fs::write(&w, r#"{"m": 2, "n": 2, "entries": [1.0]}"#).unwrap();
    assert_eq!(muonlab(&["spectra", "--weights", w.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn microtrain_smoke_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let cfg = repo_file("configs/microtrain_smoke.json");
    let run = |name: &str, threads: &str| {
        let out = tmp.path().join(name);
        let start = std::time::Instant::now();
        let res = Command::new(env!("CARGO_BIN_EXE_muonlab"))
            .args(["microtrain", "--config", cfg.to_str().unwrap(), "--out", &out_arg(&out), "--mode", "lora-only"])
            .env("MUONLAB_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
        assert!(start.elapsed().as_secs() < 60);
        out
    };
    let (a, b) = (run("a", "1"), run("b", "4"));
    let manifest = read_json(&a.join("manifest.json"));
    assert_eq!(manifest["files"], read_json(&b.join("manifest.json"))["files"]);
    let files = manifest["files"].as_array().unwrap();
    assert!(files.iter().all(|f| {
        let path = f["path"].as_str().unwrap();
        path == "table.json" || path.starts_with("trajectories/lora_")
    }));
    let table = read_json(&a.join("table.json"));
    assert!(table["mismatch"].as_array().unwrap().iter().all(|n| n["mode"] == "lora"));
}
