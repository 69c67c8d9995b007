use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn speclab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_speclab")).args(args).env_remove("SPECLAB_THREADS").output().unwrap()
}

fn run_to(dir: &Path, args: &[&str]) -> (Output, Option<Value>) {
    let mut all = args.to_vec();
    let d = dir.to_str().unwrap();
    all.extend(["--out", d, "--no-timestamp"]);
    let out = speclab(&all);
    let doc = std::fs::read_to_string(dir.join(format!("{}.json", args[0])))
        .ok()
        .map(|t| serde_json::from_str(&t).unwrap());
    (out, doc)
}

const CASES: &[&[&str]] = &[
    &["spectrum", "--domain", "orthotope:1,0.8409", "--n", "6"],
    &["spectrum", "--domain", "disk", "--h", "0.3", "--n", "3"],
    &["converge", "--domain", "orthotope:1,0.7", "--h-list", "0.4,0.2", "--n", "2"],
    &["deform", "--domain", "disk", "--h", "0.3", "--field", "squash", "--t", "0.2", "--n", "2"],
    &["track", "--domain", "orthotope:1,0.6", "--to", "orthotope:1,0.9", "--h", "0.3", "--steps", "4", "--n", "3"],
    &["check-simplicity", "--domain", "orthotope:1,1", "--n", "4"],
    &["check-independence", "--domain", "orthotope:1,0.8408964152537145", "--n", "4", "--trials", "50"],
    &["check-resonance", "--domain", "orthotope:1,1", "--height", "10"],
    &["shape-derivative", "--domain", "orthotope:1,1", "--mode", "1", "--dt", "1e-3", "--h", "0.2"],
    &["potential-derivative", "--domain", "orthotope:1", "--potential", "x1", "--mode", "2"],
    &["optimize-damping", "--domain", "orthotope:1,0.8408964152537145", "--ell", "0.5", "--N", "3"],
    &["decay-rate", "--domain", "orthotope:1", "--M", "6", "--k-damp", "0.5"],
    &["schrodinger-check", "--domain", "orthotope:1", "--n", "4", "--height", "10"],
];

#[test]
fn every_command_is_deterministic_and_round_trips() {
    for args in CASES {
        let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let (out, doc) = run_to(a.path(), args);
        assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        let doc = doc.unwrap();
        assert_eq!(doc["command"], args[0]);
        assert_eq!(doc["seed"], 0x5eed);
        run_to(b.path(), args);
        let file = format!("{}.json", args[0]);
        let first = std::fs::read(a.path().join(&file)).unwrap();
        assert_eq!(first, std::fs::read(b.path().join(&file)).unwrap(), "{args:?} is not deterministic");
        // the recorded configuration alone reproduces the run
        let cfg_path = c.path().join("config.json");
        std::fs::write(&cfg_path, serde_json::to_string(&doc["config"]).unwrap()).unwrap();
        let (out, _) = run_to(c.path(), &[args[0], "--config", cfg_path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
        assert_eq!(first, std::fs::read(c.path().join(&file)).unwrap(), "{args:?} config does not round-trip");
        let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(summary["status"], "ok");
    }
}

#[test]
fn resonance_on_the_square() {
    let dir = tempfile::tempdir().unwrap();
    let (out, doc) = run_to(dir.path(), &["check-resonance", "--domain", "orthotope:1,1", "--height", "10"]);
    assert_eq!(out.status.code(), Some(0));
    let report = &doc.unwrap()["result"]["report"];
    assert_eq!(report["verdict"], "fails");
    let rels = report["witness"]["relations"].as_array().unwrap();
    assert!(rels.iter().any(|r| r["q"] == serde_json::json!([0, 1, -1, 0])));
}

#[test]
fn damping_reports_duals() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["optimize-damping", "--domain", "orthotope:1,0.8408964152537145", "--ell", "0.5", "--N", "3", "--csv", "--sweep", "2"];
    let (out, doc) = run_to(dir.path(), &args);
    assert_eq!(out.status.code(), Some(0));
    let sol = &doc.unwrap()["result"]["solution"];
    let sum: f64 = sol["multipliers"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum();
    assert!((sum - 1.0).abs() < 1e-9);
    let csv = std::fs::read_to_string(dir.path().join("optimize-damping.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn config_errors_exit_2() {
    let bad: &[&[&str]] = &[
        &["spectrum", "--domain", "orthotope:-1"],
        &["spectrum", "--domain", "triangle"],
        &["spectrum"],
        &["spectrum", "--domain", "disk", "--n", "0"],
        &["spectrum", "--domain", "disk", "--bogus", "1"],
        &["optimize-damping", "--domain", "orthotope:1", "--ell", "5"],
        &["shape-derivative", "--domain", "disk"],
        &["nonexistent-command"],
    ];
    for args in bad {
        assert_eq!(speclab(args).status.code(), Some(2), "{args:?}");
    }
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"command": "converge", "domain": "disk"}"#).unwrap();
    assert_eq!(speclab(&["spectrum", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    std::fs::write(&cfg, r#"{"domain": "disk", "unknown_key": 3}"#).unwrap();
    assert_eq!(speclab(&["spectrum", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    std::fs::write(&cfg, r#"{"domain": "disk", "h": 0.3, "n": 2}"#).unwrap();
    let out = speclab(&["spectrum", "--config", cfg.to_str().unwrap(), "--n", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["config"]["n"], 3);
    assert_eq!(doc["result"]["lambdas"].as_array().unwrap().len(), 3);
}

#[test]
fn numerical_failure_exits_3() {
    let out = speclab(&["spectrum", "--domain", "disk", "--h", "0.2", "--n", "2", "--tolerance", "1e-300", "--max-iterations", "5"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let err: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(err["exit_code"], 3);
}

#[test]
fn threads_flag_and_env() {
    let out = speclab(&["--threads", "2", "spectrum", "--domain", "orthotope:1", "--n", "2", "--no-timestamp"]);
    assert_eq!(out.status.code(), Some(0));
    let env = Command::new(env!("CARGO_BIN_EXE_speclab"))
        .args(["spectrum", "--domain", "orthotope:1", "--n", "2", "--no-timestamp"])
        .env("SPECLAB_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(env.stdout, out.stdout);
    assert_eq!(speclab(&["--threads", "0", "spectrum", "--domain", "disk"]).status.code(), Some(2));
}

#[test]
fn timestamp_only_without_flag() {
    let with = speclab(&["spectrum", "--domain", "orthotope:1", "--n", "1"]);
    let doc: Value = serde_json::from_slice(&with.stdout).unwrap();
    assert!(doc["timestamp_unix"].is_u64());
    let without = speclab(&["spectrum", "--domain", "orthotope:1", "--n", "1", "--no-timestamp"]);
    let doc: Value = serde_json::from_slice(&without.stdout).unwrap();
    assert!(doc.get("timestamp_unix").is_none());
}
