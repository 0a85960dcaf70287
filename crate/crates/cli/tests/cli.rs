//! End-to-end checks of the batch driver: exit codes, artifacts, and
//! the byte-reproducibility contract.

use std::path::PathBuf;
use std::process::Command;

fn kfp() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kfp"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("kfp-cli-test-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn analyze_dw1_succeeds_with_report() {
    let out = temp_dir("analyze");
    let status = kfp()
        .args(["analyze", "--model", "DW1", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let report = std::fs::read_to_string(out.join("analyze.json")).unwrap();
    assert!(report.contains("\"s_min\": 0.25"));
    assert!(report.contains("critical_points"));
}

#[test]
fn analyze_single_well_exits_2() {
    let out = temp_dir("single");
    let status = kfp()
        .args(["analyze", "--model", "single-well-test", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn analyze_degenerate_structure_exits_3() {
    // nu-zero-test is a double well but its transport matrix puts a
    // fundamental eigenvalue on the imaginary axis
    let out = temp_dir("imaxis");
    let status = kfp()
        .args(["analyze", "--model", "nu-zero-test", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn malformed_config_exits_64() {
    let out = temp_dir("badcfg");
    let cfg = out.join("bad.json");
    std::fs::write(&cfg, "{\"solver\": {\"basis\": -1,}").unwrap();
    let status = kfp()
        .args(["analyze", "--config"])
        .arg(&cfg)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(64));
    // unknown keys are also rejected
    std::fs::write(&cfg, "{\"unknown_key\": 1}").unwrap();
    let status = kfp()
        .args(["analyze", "--config"])
        .arg(&cfg)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(64));
    // non-decreasing sweep rejected
    std::fs::write(&cfg, "{\"sweep\": {\"h\": [0.06, 0.08]}}").unwrap();
    let status = kfp()
        .args(["splitting", "--config"])
        .arg(&cfg)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(64));
}

#[test]
fn check_passes_dw1_and_fails_control() {
    let out = temp_dir("check");
    let status = kfp()
        .args(["check", "--model", "DW1", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(out.join("hypotheses.json").exists());
    assert!(out.join("averages.csv").exists());

    let status = kfp()
        .args(["check", "--model", "nu-zero-test", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(4));
}

#[test]
fn inline_model_config_is_accepted() {
    let out = temp_dir("inline");
    let cfg = out.join("cfg.json");
    let inline = r#"{
        "model": {
            "name": "inline-well",
            "dim": 2,
            "phi": [
                {"exps": [0, 2], "coef": 0.5},
                {"exps": [4, 0], "coef": 0.25},
                {"exps": [2, 0], "coef": -0.5}
            ],
            "A": [[0.0, 0.5], [-0.5, 0.5]]
        }
    }"#;
    std::fs::write(&cfg, inline).unwrap();
    let status = kfp()
        .args(["analyze", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
}

#[test]
fn reruns_are_byte_identical() {
    let out1 = temp_dir("det1");
    let out2 = temp_dir("det2");
    for out in [&out1, &out2] {
        let status = kfp()
            .args(["analyze", "--model", "DW2", "--out"])
            .arg(out)
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
        let status = kfp()
            .args(["complex-verify", "--model", "DW2", "--h", "0.3", "--out"])
            .arg(out)
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
    }
    for name in ["analyze.json", "complex_verify.json"] {
        let a = std::fs::read(out1.join(name)).unwrap();
        let b = std::fs::read(out2.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between reruns");
    }
}

#[test]
fn complex_verify_dumps_triplets_on_request() {
    let out = temp_dir("dump");
    let status = kfp()
        .args(["complex-verify", "--model", "DW1", "--h", "0.4", "--dump", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let lap0 = std::fs::read_to_string(out.join("lap0.txt")).unwrap();
    let header: Vec<usize> = lap0
        .lines()
        .next()
        .unwrap()
        .split_whitespace()
        .map(|t| t.parse().unwrap())
        .collect();
    assert_eq!(header.len(), 3);
    assert_eq!(header[0], header[1], "lap0 is square");
    assert_eq!(lap0.lines().count(), header[2] + 1);
}
