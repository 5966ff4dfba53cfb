use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

const BIN: &str = env!("CARGO_BIN_EXE_refprint");

fn shipped(name: &str) -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// The shipped vector config shrunk to run in well under a second.
fn small_vector(size: u64, k: u64) -> Value {
    let mut c = shipped("vector.json");
    c["corpus"]["size"] = json!(size);
    c["iterations"] = json!(k);
    c["verify_at"] = json!([k]);
    c["attacks"]["paraphrase"][0]["iterations"] = json!([k]);
    c["natural"]["size"] = json!(size);
    c["analysis"]["lipschitz_samples"] = json!(size.min(10));
    c
}

fn write_config(dir: &Path, cfg: &Value) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn run_cmd(cmd: &str, config: &Path, out: &Path) -> Output {
    run(&[cmd, "--config", config.to_str().unwrap(), "--output", out.to_str().unwrap()])
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn files_under(dir: &Path) -> Vec<String> {
    let mut found: Vec<String> = walkdir::WalkDir::new(dir)
        .into_iter()
        .map(Result::unwrap)
        .filter(|e| e.file_type().is_file())
        .map(|e| e.path().strip_prefix(dir).unwrap().display().to_string())
        .collect();
    found.sort();
    found
}

#[test]
fn usage_and_config_errors_exit_1() {
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["generate"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["generate", "--config", "/nonexistent/config.json"])), 1);

    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_vector(3, 2);
    cfg["iterations"] = json!(-1);
    let o = run_cmd("generate", &write_config(dir.path(), &cfg), &dir.path().join("out"));
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("iterations"));
}

#[test]
fn runtime_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small_vector(3, 2));
    // Nothing generated yet.
    assert_eq!(code(&run_cmd("verify", &cfg, &dir.path().join("empty"))), 2);
}

#[test]
fn full_pipeline_layout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small_vector(3, 2));
    let out = dir.path().join("out");
    for cmd in ["generate", "verify", "analyze", "attack"] {
        let o = run_cmd(cmd, &cfg, &out);
        assert_eq!(code(&o), 0, "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(out.join(format!("{cmd}.manifest.json")).exists());
    }

    // size 3, K = 2: three traces per model, each with x0..x2.
    for g in ["vec-0", "vec-1", "vec-2", "vec-3"] {
        let traces = fs::read_dir(out.join("traces").join(g)).unwrap().count();
        assert_eq!(traces, 3);
        let samples = fs::read_dir(out.join("traces").join(g).join("00000"))
            .unwrap()
            .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("x_"))
            .count();
        assert_eq!(samples, 3);
    }

    // Four models give 12 ordered pairs; four deltas give 48 rows.
    let pairs: Vec<Value> = serde_json::from_str(&fs::read_to_string(out.join("verify/pairs.json")).unwrap()).unwrap();
    assert_eq!(pairs.len(), 48);
    let csv = fs::read_to_string(out.join("verify/pairs.csv")).unwrap();
    assert_eq!(csv.lines().count(), 49);

    let files = files_under(&out);
    assert!(files.iter().any(|f| f.starts_with("analysis/convergence_")));
    assert!(files.iter().any(|f| f.starts_with("attacks/paraphrase/")));
    assert!(files.contains(&"attacks/natural/auc.json".to_owned()));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small_vector(4, 2));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        for cmd in ["generate", "verify"] {
            assert_eq!(code(&run_cmd(cmd, &cfg, out)), 0);
        }
    }
    let one_thread = run(&["generate", "--config", cfg.to_str().unwrap(), "--output", a.to_str().unwrap(), "--jobs", "1"]);
    assert_eq!(code(&one_thread), 0);
    for m in ["generate.manifest.json", "verify.manifest.json"] {
        assert_eq!(fs::read(a.join(m)).unwrap(), fs::read(b.join(m)).unwrap(), "{m}");
    }
}

#[test]
fn seed_override_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small_vector(2, 1));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&run_cmd("generate", &cfg, &a)), 0);
    let o = run(&["generate", "--config", cfg.to_str().unwrap(), "--output", b.to_str().unwrap(), "--seed", "9"]);
    assert_eq!(code(&o), 0);
    let x = "traces/vec-0/00000/x_000.json";
    assert_ne!(fs::read(a.join(x)).unwrap(), fs::read(b.join(x)).unwrap());
}

#[test]
fn empty_attack_config_writes_no_attack_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small_vector(3, 2);
    c.as_object_mut().unwrap().remove("attacks");
    c.as_object_mut().unwrap().remove("natural");
    let cfg = write_config(dir.path(), &c);
    let out = dir.path().join("out");
    assert_eq!(code(&run_cmd("generate", &cfg, &out)), 0);
    assert_eq!(code(&run_cmd("attack", &cfg, &out)), 0);
    assert!(!out.join("attacks").exists());
}

#[test]
fn single_model_zoo_has_empty_separation() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small_vector(5, 2);
    c["zoo"] = json!([c["zoo"][0].clone()]);
    c.as_object_mut().unwrap().remove("attacks");
    let cfg = write_config(dir.path(), &c);
    let out = dir.path().join("out");
    assert_eq!(code(&run_cmd("generate", &cfg, &out)), 0);
    let o = run_cmd("analyze", &cfg, &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: Value = serde_json::from_str(&fs::read_to_string(out.join("analysis/summary.json")).unwrap()).unwrap();
    for d in summary["density"].as_array().unwrap() {
        assert_eq!(d["auc_separation"], json!({}));
    }
}

#[test]
fn bridge_check_passes_against_builtin_echo() {
    let o = run(&["bridge-check", "--program", "@self", "--arg", "bridge-echo"]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(code(&o), 0, "{stdout}");
    assert!(stdout.lines().count() > 5);
    assert!(stdout.lines().all(|l| l.starts_with("PASS ")), "{stdout}");
}

#[test]
fn bridge_check_fails_against_a_silent_program() {
    let o = run(&["bridge-check", "--program", "true", "--timeout-ms", "100"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL "));
}

#[test]
fn echo_bridge_pipeline_never_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let bridge = |id: &str| json!({"id": id, "kind": "bridge", "endpoint": "echo", "modality": "vector"});
    let c = json!({
        "name": "echo",
        "master_seed": 1,
        "zoo": [bridge("echo-a"), bridge("echo-b")],
        "corpus": {"size": 4},
        "iterations": 2,
        "metrics": ["euclidean"],
        "deltas": [0.05, 0.1],
        "mode": {"mode": "full"},
        "bridges": {"echo": {"transport": "process", "program": "@self", "args": ["bridge-echo"]}},
        "output_dir": "unused"
    });
    let cfg = write_config(dir.path(), &c);
    let out = dir.path().join("out");
    for cmd in ["generate", "verify"] {
        let o = run_cmd(cmd, &cfg, &out);
        assert_eq!(code(&o), 0, "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let pairs: Vec<Value> = serde_json::from_str(&fs::read_to_string(out.join("verify/pairs.json")).unwrap()).unwrap();
    assert_eq!(pairs.len(), 4);
    for p in &pairs {
        assert_eq!((p["tp"].as_u64(), p["fp"].as_u64()), (Some(0), Some(0)), "{p}");
    }
    let onestep = fs::read_to_string(out.join("verify/onestep_k2.csv")).unwrap();
    for line in onestep.lines().skip(1) {
        let d: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert_eq!(d, 0.0, "{line}");
    }

    let check = run(&["bridge-check", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&check), 0, "{}", String::from_utf8_lossy(&check.stdout));
}
