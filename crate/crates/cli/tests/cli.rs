use std::path::{Path, PathBuf};
use std::process::Command;

fn rmi() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rmi"))
}

fn demo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/demo.toml")
}

#[test]
fn validate_accepts_demo_and_warns_about_germany() {
    let out = rmi().args(["validate", "--config"]).arg(demo()).output().unwrap();
    assert!(out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("warning: window 1950–2019 for DEUTNP clamped to 1991–2019"), "{err}");
}

#[test]
fn validate_reports_errors_with_exit_code_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "countries = [\"CZE\"]\nages = [84]\n").unwrap();
    let out = rmi().args(["validate", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("error: age 84 below smoothing range 85–109"), "{err}");
    assert!(err.contains("error: no data paths for CZE"), "{err}");
}

#[test]
fn unknown_config_keys_fail_validation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "countries = [\"CZE\"]\nseeds = 3\n").unwrap();
    let out = rmi().args(["validate", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn run_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = rmi()
        .args(["run", "--seed", "7", "--jobs", "2", "--config"])
        .arg(demo())
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: String = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\": 7"));
    assert!(manifest.contains("\"jobs\": 2"));

    let again = tempfile::tempdir().unwrap();
    let rep = rmi().args(["report", "--manifest"]).arg(dir.path().join("manifest.json")).arg("--out").arg(again.path()).output().unwrap();
    assert!(rep.status.success());
    assert_eq!(
        std::fs::read(dir.path().join("table2.csv")).unwrap(),
        std::fs::read(again.path().join("table2.csv")).unwrap()
    );
}
