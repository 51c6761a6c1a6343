use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mfg-lab"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn non_convex_hamiltonian_fails_validation() {
    let o = bin().args(["validate", "--config"]).arg(config("invalid/abs-hamiltonian.toml")).output().unwrap();
    assert_eq!(o.status.code(), Some(3));
    let err = stderr(&o);
    assert!(err.contains("coercivity condition violated") && err.contains("line 5"), "{err}");
}

#[test]
fn negative_initial_density_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["solve", "--config"])
        .arg(config("invalid/negative-mass.toml"))
        .arg("--output")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("density invariant violated"), "{}", stderr(&o));
}

#[test]
fn unknown_keys_are_reported_with_their_line() {
    let o = bin().args(["validate", "--config"]).arg(config("invalid/unknown-key.toml")).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("line 5") && err.contains("resolution"), "{err}");
}

#[test]
fn kind_must_match_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin().args(["stability", "--config"]).arg(config("solve.toml")).arg("--output").arg(dir.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("solve"), "{}", stderr(&o));
}

#[test]
fn unknown_kinds_are_rejected() {
    let o = bin().args(["simulate", "--config"]).arg(config("solve.toml")).output().unwrap();
    assert!(!o.status.success());
}

#[test]
fn shipped_configs_validate() {
    for entry in std::fs::read_dir(config("")).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let o = bin().args(["validate", "--config"]).arg(&path).output().unwrap();
            assert!(o.status.success(), "{}: {}", path.display(), stderr(&o));
            let report: Value = serde_json::from_slice(&o.stdout).unwrap();
            assert!(report["failures"].as_array().unwrap().is_empty());
        }
    }
}

#[test]
fn solve_writes_fields_summary_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = bin()
        .args(["solve", "--config"])
        .arg(config("solve.toml"))
        .arg("--output")
        .arg(&out)
        .args(["--seed", "99"])
        .env("MFG_LAB_THREADS", "2")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["status"], "ok");
    assert_eq!(summary["seed"], 99);
    assert!(summary["results"]["solution"]["converged"].as_bool().unwrap());
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["status"], "complete");
    assert_eq!(manifest["threads"], 2);
    assert_eq!(manifest["config"]["grid"]["n"], 32);
    assert_eq!(manifest["config"]["seed"], 99);
    for f in manifest["files"].as_array().unwrap() {
        assert!(out.join(f.as_str().unwrap()).exists(), "{f}");
    }
    for f in ["u.bin", "u.csv", "m.bin", "w.bin", "picard.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let m: mfg_lab::Field = mfg_lab::grid::io::scalar_from_bytes(&std::fs::read(out.join("m.bin")).unwrap()).unwrap();
    assert_eq!(m.grid().n_space(), 32);
}

#[test]
fn convergence_study_reports_the_order() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["convergence-study", "--config"])
        .arg(config("convergence-study.toml"))
        .arg("--output")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let s = read_json(&dir.path().join("summary.json"));
    assert!(s["results"]["spatial_order"].as_f64().unwrap() > 1.8);
    assert!(dir.path().join("convergence.csv").exists());
}
