//! End-to-end checks of the binary: exit codes, file outputs and
//! reproducibility of report numerics.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_levychaos"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("levychaos-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("exp.cfg");
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn verify_passes_and_is_reproducible() {
    let dir = temp_dir("verify");
    let cfg = write_config(&dir, "version = 1\nseed = 11\nn_paths = 1500\nsuite = poisson, gram\n");
    let run = |out: &str| {
        let out_dir = dir.join(out);
        let status = bin()
            .args(["verify", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()])
            .status()
            .unwrap();
        assert!(status.success(), "verify exited {status}");
        std::fs::read_to_string(out_dir.join("report.json")).unwrap()
    };
    let a = run("a");
    let b = run("b");
    let strip = |s: &str| {
        s.lines().filter(|l| !l.contains("runtime_ms")).collect::<Vec<_>>().join("\n")
    };
    assert_eq!(strip(&a), strip(&b), "report numerics differ across identical runs");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn config_error_exits_two() {
    let dir = temp_dir("badcfg");
    let cfg = write_config(&dir, "version = 1\nseed = 3\nbogus_key = 1\n");
    let output = bin().args(["verify", "--config", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("bogus_key"), "diagnostic should name the field: {stderr}");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn missing_seed_without_config_exits_two() {
    let output = bin().args(["verify"]).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn basis_export_writes_csv() {
    let dir = temp_dir("basis");
    let cfg = write_config(&dir, "version = 1\nseed = 5\nbasis.kind = teugels\nbasis.n_max = 3\n");
    let out_dir = dir.join("out");
    let status = bin()
        .args([
            "basis",
            "--config",
            cfg.to_str().unwrap(),
            "--basis",
            "teugels",
            "--out",
            out_dir.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out_dir.join("basis.csv")).unwrap();
    assert!(csv.starts_with("member_index,at_zero"));
    assert!(csv.lines().count() >= 3);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn simulate_writes_csv_and_binary() {
    let dir = temp_dir("simulate");
    let cfg = write_config(
        &dir,
        "version = 1\nseed = 8\nn_paths = 3\ngrid_step = 0.25\nnu.atoms = 1.0:2.0\n",
    );
    let out_dir = dir.join("out");
    let status = bin()
        .args([
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--f",
            "basis:0",
            "--out",
            out_dir.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out_dir.join("path_00000.csv")).unwrap();
    assert!(csv.starts_with("time,value,pre_value"));

    let status = bin()
        .args([
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--format",
            "bin",
            "--out",
            out_dir.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let bytes = std::fs::read(out_dir.join("paths.bin")).unwrap();
    assert_eq!(&bytes[0..4], b"LVCB");
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
    assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 3);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn project_emits_tables() {
    let dir = temp_dir("project");
    let cfg = write_config(
        &dir,
        "version = 1\nseed = 13\nn_paths = 800\ngrid_step = 0.05\norder_cap = 2\nchaos.depth = 1\n",
    );
    let out_dir = dir.join("out");
    let status = bin()
        .args([
            "project",
            "--config",
            cfg.to_str().unwrap(),
            "--target",
            "member_sq:0",
            "--out",
            out_dir.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let json = std::fs::read_to_string(out_dir.join("projection.json")).unwrap();
    assert!(json.contains("residuals"));
    assert!(out_dir.join("projection.csv").exists());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn verify_runs_user_spec_files() {
    let dir = temp_dir("userspec");
    let cfg = write_config(
        &dir,
        "version = 1\nseed = 21\nn_paths = 4000\ngrid_step = 0.01\nsuite = poisson\n",
    );
    let spec = dir.join("order2.spec");
    std::fs::write(&spec, "indices = 0 0\nf0 = 1.0\nfactor = 0:1.0\nfactor = 0:1.0\n").unwrap();
    let out_dir = dir.join("out");
    let output = bin()
        .args([
            "verify",
            "--config",
            cfg.to_str().unwrap(),
            "--spec-file",
            spec.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let report = std::fs::read_to_string(out_dir.join("report.json")).unwrap();
    assert!(report.contains("userspec.order2"), "spec check missing from report");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn report_command_reemits_tables() {
    let dir = temp_dir("report");
    let cfg = write_config(&dir, "version = 1\nseed = 11\nn_paths = 1000\nsuite = poisson\n");
    let out_dir = dir.join("out");
    assert!(bin()
        .args(["verify", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()])
        .status()
        .unwrap()
        .success());
    let again = dir.join("again");
    let status = bin()
        .args([
            "report",
            "--report",
            out_dir.join("report.json").to_str().unwrap(),
            "--out",
            again.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(again.join("checks_poisson.csv").exists());
    std::fs::remove_dir_all(&dir).ok();
}
