use std::path::Path;
use std::process::{Command, Output};

fn ccm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ccm")).current_dir(dir).env_remove("CCM_SERVER").args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

const SHORT: &str = "[simulate]\nduration = 20.0\ninterval = 10.0\n";

#[test]
fn simulate_writes_outputs_and_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "run.toml", SHORT);
    let out = ccm(dir.path(), &["simulate", "--config", "run.toml", "--out", "res"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let res = dir.path().join("res");
    for f in ["field.csv", "fronts.csv", "audit.csv", "summary.json", "resolved.toml"] {
        assert!(res.join(f).is_file(), "missing {f}");
    }
    let resolved = std::fs::read_to_string(res.join("resolved.toml")).unwrap();
    assert!(resolved.contains("duration = 20.0"));
    // The resolved copy is itself a valid configuration that reproduces the run.
    let again = ccm(dir.path(), &["simulate", "--config", "res/resolved.toml", "--out", "res2"]);
    assert!(again.status.success());
    assert_eq!(
        std::fs::read(res.join("field.csv")).unwrap(),
        std::fs::read(dir.path().join("res2/field.csv")).unwrap()
    );
}

#[test]
fn unknown_key_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "bad.toml", "[simulate]\nduraton = 5.0\n");
    let out = ccm(dir.path(), &["simulate", "--config", "bad.toml", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("duraton"));
}

#[test]
fn missing_config_file_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = ccm(dir.path(), &["simulate", "--config", "nope.toml", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn negative_offset_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "run.toml", "");
    let out = ccm(dir.path(), &["tune", "--config", "run.toml", "--seq", "harmonic", "--a", "1", "--b", "-1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn oversized_time_step_exits_with_numeric_code() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "run.toml", &format!("[machine.grid]\ndt = 5.0\n{SHORT}"));
    let out = ccm(dir.path(), &["simulate", "--config", "run.toml", "--out", "x"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn ambient_profile_exits_with_degenerate_code() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "run.toml", "[identify]\nsettle = 60.0\n");
    let csv: String = std::iter::once("coord,inner\n".to_string())
        .chain((0..121).map(|i| format!("{},300\n", i as f64 * 0.005)))
        .collect();
    write(dir.path(), "flat.csv", &csv);
    let out = ccm(dir.path(), &["identify", "--config", "run.toml", "--measurements", "flat.csv"]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn external_server_is_used_when_given() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "run.toml", SHORT);
    // Nothing listens on this port, so the run must fail instead of falling back.
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let out = Command::new(env!("CARGO_BIN_EXE_ccm"))
        .current_dir(dir.path())
        .env("CCM_SERVER", format!("http://127.0.0.1:{port}"))
        .args(["simulate", "--config", "run.toml", "--out", "x"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot reach"));
}
