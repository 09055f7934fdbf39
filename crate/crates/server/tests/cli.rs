use std::path::PathBuf;
use std::process::{Command, Output};

fn penflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_penflow")).args(args).output().unwrap()
}

fn fixture() -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/fixture.csv").to_string_lossy().into_owned()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(penflow(&["--help"]).status.code(), Some(0));
    assert_eq!(penflow(&["--version"]).status.code(), Some(0));
    assert_eq!(penflow(&["mine", "--help"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(penflow(&["cluster", "--bogus"]).status.code(), Some(64));
    assert_eq!(penflow(&["frobnicate"]).status.code(), Some(64));
    assert_eq!(penflow(&[]).status.code(), Some(64));
}

#[test]
fn invalid_input_exits_2() {
    let f = fixture();
    let out = penflow(&["cluster", "--k", "40", "--in", &f]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
    assert_eq!(penflow(&["stats", "--in", "/nonexistent/log.csv"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "author,role\nx,y\n").unwrap();
    assert_eq!(penflow(&["stats", "--in", bad.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("stats.json");
    let f = fixture();
    let run = penflow(&["stats", "--in", &f, "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(0));
    assert!(run.stdout.is_empty());
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(v["collections"].as_array().unwrap().len(), 4);
}

#[test]
fn text_format_and_ingest_conversion() {
    let f = fixture();
    let run = penflow(&["--format", "text", "cluster", "--in", &f]);
    assert_eq!(run.status.code(), Some(0));
    assert!(String::from_utf8(run.stdout).unwrap().contains("NS-individual"));

    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("log.json");
    let run = penflow(&["ingest", "--in", &f, "--emit", "json", "--out", json.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(0));
    let a = penflow(&["stats", "--in", &f]);
    let b = penflow(&["stats", "--in", json.to_str().unwrap()]);
    assert_eq!(a.stdout, b.stdout);
}
