//! Exit codes and flags of the `hybrid-fpn` binary.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hybrid-fpn"))
}

fn code(cmd: &mut Command) -> i32 {
    cmd.output().unwrap().status.code().unwrap()
}

#[test]
fn usage_errors_exit_with_config_code() {
    assert_eq!(code(bin().arg("frobnicate")), 1);
    assert_eq!(code(bin().args(["verify", "--preset", "huge"])), 1);
    assert_eq!(code(bin().arg("--help")), 0);
}

#[test]
fn bad_config_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    std::fs::write(&path, r#"{"name": "x"}"#).unwrap();
    assert_eq!(code(bin().args(["verify", "--config"]).arg(&path)), 1);
}

#[test]
fn missing_config_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(bin().args(["verify", "--config"]).arg(dir.path().join("absent.json"))), 3);
}

#[test]
fn missing_shards_are_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(bin().args(["benchmark", "--out"]).arg(dir.path())), 3);
}

#[test]
fn generate_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let st =
        bin().args(["generate", "--split", "test", "--count", "4", "--seed", "9", "--out"]).arg(&out).status().unwrap();
    assert!(st.success());
    assert!(out.join("data/test.shard").exists());
    let cfg: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(cfg["dataset"]["seed"], 9);
    // every default is written out
    assert_eq!(cfg["geometry"]["carrier_freq"], 3e11);
    let o = bin().args(["verify", "--out"]).arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().all(|l| l.starts_with("PASS")));
    assert!(text.contains("shard test.shard"));
}
