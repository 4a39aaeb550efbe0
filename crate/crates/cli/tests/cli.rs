use std::path::Path;
use std::process::{Command, Output};

use mmrank::certificate::{Certificate, Technique};
use serde_json::Value;

fn mmrank(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmrank")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("valid JSON on stdout")
}

fn prove_222(dir: &Path, name: &str, extra: &[&str]) -> std::path::PathBuf {
    let cert = dir.join(name);
    let mut args = vec!["prove", "2", "2", "2", "--quiet", "--cert", cert.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = mmrank(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("lower bound: 7"));
    cert
}

#[test]
fn orbits_counts() {
    let o = mmrank(&["orbits", "2", "2", "--square"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("total: 10"));
    let o = mmrank(&["orbits", "3", "3", "--json"]);
    assert!(o.status.success());
    let v = json(&o);
    assert_eq!(v["total"], 710);
    assert_eq!(v["layers"].as_array().unwrap().len(), 10);
}

#[test]
fn orbits_writes_a_catalog_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.bin");
    let o = mmrank(&["orbits", "2", "3", "--out", path.to_str().unwrap()]);
    assert!(o.status.success());
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..4], b"MM2O");
    assert_eq!(mmrank::orbits::OrbitCatalog::from_bytes(&bytes).unwrap().len(), 31);
}

#[test]
fn prove_verify_dump() {
    let dir = tempfile::tempdir().unwrap();
    let cert = prove_222(dir.path(), "c.bin", &[]);
    let cert = cert.to_str().unwrap();

    let o = mmrank(&["verify", "--cert", cert]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("verified lower bound: 7"));

    let o = mmrank(&["verify", "--cert", cert, "--json"]);
    let v = json(&o);
    assert_eq!(v["verified"], true);
    assert_eq!(v["lower_bound"], 7);
    assert_eq!(v["bounds"].as_array().unwrap().len(), 10);

    let o = mmrank(&["dump", "--cert", cert]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| l.starts_with("orbit ")).count(), 10);

    let o = mmrank(&["dump", "--cert", cert, "--json"]);
    let v = json(&o);
    assert_eq!(v["orbits"].as_array().unwrap().len(), 10);
    assert_eq!(v["orbits"][0]["technique"]["kind"], "substitution");
    assert_eq!(v["lower_bound"], 7);
}

#[test]
fn tampered_certificates_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = prove_222(dir.path(), "c.bin", &[]);
    let mut cert = Certificate::from_bytes(&std::fs::read(&path).unwrap()).unwrap();
    let Technique::Substitution { stages, .. } = &mut cert.records[0].technique else { panic!("orbit 0") };
    let r = &mut stages[0].records[0];
    r.child = if r.child == 1 { 2 } else { 1 };
    let bad = dir.path().join("bad.bin");
    std::fs::write(&bad, cert.to_bytes()).unwrap();
    let o = mmrank(&["verify", "--cert", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("orbit 0"));

    let o = mmrank(&["verify", "--cert", bad.to_str().unwrap(), "--json"]);
    assert_eq!(o.status.code(), Some(2));
    let v = json(&o);
    assert_eq!(v["verified"], false);
    assert_eq!(v["orbit"], 0);
    assert_eq!(v["technique"], "substitution");

    let mut bytes = std::fs::read(&path).unwrap();
    bytes[30] ^= 1;
    std::fs::write(&bad, bytes).unwrap();
    assert_eq!(mmrank(&["verify", "--cert", bad.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn single_thread_certificates_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = prove_222(dir.path(), "a.bin", &["--threads", "1"]);
    let b = prove_222(dir.path(), "b.bin", &["--threads", "1"]);
    let c = prove_222(dir.path(), "c.bin", &["--threads", "3"]);
    let a = std::fs::read(a).unwrap();
    assert_eq!(a, std::fs::read(b).unwrap());
    assert_eq!(a, std::fs::read(c).unwrap());
}

#[test]
fn prove_json_and_summary_lines() {
    let dir = tempfile::tempdir().unwrap();
    let summary = dir.path().join("s.jsonl");
    let o = mmrank(&[
        "prove", "2", "2", "2", "--quiet", "--json", "--target", "7", "--step-limit", "1e6", "--summary",
        summary.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let v = json(&o);
    assert_eq!(v["lower_bound"], 7);
    assert_eq!(v["target_reached"], true);
    assert_eq!(v["orbits"], 10);
    let lines: Vec<Value> = std::fs::read_to_string(&summary)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 10);
    assert_eq!(lines[0]["orbit"], 0);
    assert_eq!(lines[0]["bound"], 7);
}

#[test]
fn prove_logs_progress_to_stderr() {
    let o = mmrank(&["prove", "2", "2", "2"]);
    assert!(o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    let lines: Vec<Value> = err.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 10);
}

#[test]
fn oracle_subcommand() {
    let o = mmrank(&["oracle", "2", "2", "2", "--restrict", "1,2,4", "--json"]);
    assert!(o.status.success());
    assert_eq!(json(&o)["rank"], 2);
}

#[test]
fn usage_and_environment_errors_exit_with_one() {
    assert_eq!(mmrank(&[]).status.code(), Some(1));
    assert_eq!(mmrank(&["prove", "2", "2"]).status.code(), Some(1));
    assert_eq!(mmrank(&["prove", "9", "2", "2"]).status.code(), Some(1));
    assert_eq!(mmrank(&["verify", "--cert", "/nonexistent/c.bin"]).status.code(), Some(1));
    assert_eq!(mmrank(&["orbits", "2", "3", "--square"]).status.code(), Some(1));
}
