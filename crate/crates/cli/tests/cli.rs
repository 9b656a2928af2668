//! End-to-end runs of the `scrom` binary.

use std::path::{Path, PathBuf};
use std::process::Command;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn scrom(config: &Path, out: &Path, args: &[&str]) -> i32 {
    let status = Command::new(env!("CARGO_BIN_EXE_scrom"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(["--log-level", "error"])
        .args(args)
        .status()
        .expect("binary runs");
    status.code().expect("exited normally")
}

fn pipeline(config: &Path, out: &Path) {
    for cmd in ["fom-run", "build-basis", "rom-run"] {
        assert_eq!(scrom(config, out, &[cmd]), 0, "{cmd} on {}", config.display());
    }
}

#[test]
fn novel_pipeline_succeeds_and_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("burgers_novel.toml");
    pipeline(&cfg, dir.path());
    for f in ["snapshots.bin", "fom_report.csv", "rom_novel.json", "rom_novel_report.csv"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    assert_eq!(scrom(&cfg, dir.path(), &["verify"]), 0);
    let report = dir.path().join("rom_novel_report.csv");
    let r = report.to_str().unwrap();
    assert_eq!(scrom(&cfg, dir.path(), &["compare", r, r]), 0);
}

#[test]
fn tolerance_breach_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("burgers_novel.toml"))
        .unwrap()
        .replace("kind = \"novel\"", "kind = \"pod\"");
    let cfg = dir.path().join("pod_with_tolerance.toml");
    std::fs::write(&cfg, text).unwrap();
    for cmd in ["fom-run", "build-basis"] {
        assert_eq!(scrom(&cfg, dir.path(), &[cmd]), 0);
    }
    assert_eq!(scrom(&cfg, dir.path(), &["rom-run"]), 1);
}

#[test]
fn compare_threshold_breach_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let novel = configs().join("burgers_novel.toml");
    let pod = configs().join("burgers_pod.toml");
    pipeline(&novel, dir.path());
    for cmd in ["build-basis", "rom-run"] {
        assert_eq!(scrom(&pod, dir.path(), &[cmd]), 0);
    }
    let a = dir.path().join("rom_novel_report.csv");
    let b = dir.path().join("rom_pod_report.csv");
    let args = ["compare", a.to_str().unwrap(), b.to_str().unwrap()];
    assert_eq!(scrom(&novel, dir.path(), &args), 1);
}

#[test]
fn tampered_artifact_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("burgers_novel.toml");
    for cmd in ["fom-run", "build-basis"] {
        assert_eq!(scrom(&cfg, dir.path(), &[cmd]), 0);
    }
    let path = dir.path().join("rom_novel.json");
    let mut art: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    art["audit"]["orthonormality"] = serde_json::json!(0.5);
    std::fs::write(&path, art.to_string()).unwrap();
    assert_eq!(scrom(&cfg, dir.path(), &["verify"]), 1);
}

#[test]
fn invalid_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(configs().join("burgers_novel.toml"))
        .unwrap()
        .replace("viscosity = 0.01", "viscosity = -0.01");
    std::fs::write(&cfg, text).unwrap();
    assert_eq!(scrom(&cfg, dir.path(), &["fom-run"]), 1);
}

#[test]
fn missing_inputs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("burgers_novel.toml");
    assert_eq!(scrom(&cfg, dir.path(), &["rom-run"]), 2);
    assert_eq!(scrom(&cfg, dir.path(), &["build-basis"]), 2);
    let missing = dir.path().join("absent.toml");
    assert_eq!(scrom(&missing, dir.path(), &["fom-run"]), 2);
}

#[test]
fn batch_runs_write_per_config_directories() {
    let dir = tempfile::tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_scrom"))
        .arg("--config")
        .arg(configs().join("burgers_novel.toml"))
        .arg("--config")
        .arg(configs().join("burgers_pod.toml"))
        .arg("--out")
        .arg(dir.path())
        .args(["--threads", "2", "--log-level", "error", "fom-run"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    for stem in ["burgers_novel", "burgers_pod"] {
        assert!(dir.path().join(stem).join("snapshots.bin").exists());
    }
}
