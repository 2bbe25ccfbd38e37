use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tcount_opt::qasm;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tcount-opt"))
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str], files: &[&Path]) -> Output {
    bin().args(args).args(files).output().unwrap()
}

const NEAR_S: &str = "OPENQASM 2.0;\nqreg q[2];\nh q[0];\nrz(pi/2 + 1e-10) q[0];\ncx q[0],q[1];\nrz(0.3) q[1];\n";

#[test]
fn verify_identical_files_prints_zero() {
    let dir = tempfile::tempdir().unwrap();
    let x = write(dir.path(), "x.qasm", NEAR_S);
    let out = run(&["verify"], &[&x, &x]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "0");
}

#[test]
fn verify_distinct_circuits_misses_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.qasm", "qreg q[1]; h q[0];");
    let b = write(dir.path(), "b.qasm", "qreg q[1]; x q[0];");
    let out = run(&["verify"], &[&a, &b]);
    assert_eq!(out.status.code(), Some(1));
    let d: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!((d - 0.5f64.sqrt()).abs() < 1e-12);
}

#[test]
fn input_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.qasm", "qreg q[1];\nfoo q[0];\n");
    let out = run(&["round"], &[&bad]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("2:1"));

    let good = write(dir.path(), "good.qasm", NEAR_S);
    assert_eq!(run(&["round", "--starts", "0"], &[&good]).status.code(), Some(2));
    assert_eq!(run(&["round", "--threshold", "2"], &[&good]).status.code(), Some(2));
    assert_eq!(run(&["round", "--bogus"], &[&good]).status.code(), Some(2));
    assert_eq!(run(&["optimize", "--block-size", "1"], &[&good]).status.code(), Some(2));

    let wide = write(dir.path(), "wide.qasm", "qreg q[3]; h q[2];");
    let out = bin().arg("round").arg(&good).arg("--target").arg(&wide).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unreachable_target_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "rz.qasm", "qreg q[1]; rz(0.2) q[0];");
    let target = write(dir.path(), "h.qasm", "qreg q[1]; h q[0];");
    let out = bin().arg("round").arg(&input).arg("--target").arg(&target).arg("--starts").arg("2").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn round_writes_circuit_and_recountable_report() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "in.qasm", NEAR_S);
    let out_path = dir.path().join("out.qasm");
    let report_path = dir.path().join("report.json");
    let out = bin()
        .arg("round")
        .arg(&input)
        .args(["--seed", "5", "--out"])
        .arg(&out_path)
        .arg("--report")
        .arg(&report_path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());

    let text = std::fs::read_to_string(&out_path).unwrap();
    assert!(text.contains("s q[0];"), "{text}");
    let (c, p) = qasm::parse(&text).unwrap();
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    for key in [
        "input", "mode", "threshold", "angle_set", "seed", "n_rounded", "n_clifford", "n_t", "t_before", "t_after",
        "rz_before", "rz_after", "angle_classes", "leftover_angles", "verified_distance", "wall_time_s",
    ] {
        assert!(report.get(key).is_some(), "missing {key}");
    }
    assert_eq!(report["t_after"].as_u64().unwrap() as usize, c.t_count());
    assert_eq!(report["rz_after"].as_u64().unwrap() as usize, c.num_params());
    assert_eq!(report["rz_before"], 2);
    assert_eq!(report["n_rounded"], 1);
    assert_eq!(report["leftover_angles"].as_array().unwrap().len(), p.len());
    assert!(report["verified_distance"].as_f64().unwrap() <= 1e-8);
}

#[test]
fn round_defaults_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "in.qasm", "qreg q[1]; rz(pi) q[0]; h q[0];");
    let out = run(&["round"], &[&input]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text, "OPENQASM 2.0;\ninclude \"qelib1.inc\";\nqreg q[1];\nz q[0];\nh q[0];\n");
}

#[test]
fn optimize_reports_blocks() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(
        dir.path(),
        "in.qasm",
        "qreg q[4];\nh q[0];\nrz(pi/4) q[0];\ncx q[0],q[1];\nh q[2];\ncx q[2],q[3];\nrz(1e-12) q[3];\nrz(0.4) q[1];\n",
    );
    let report_path = dir.path().join("r.json");
    let out = bin()
        .arg("optimize")
        .arg(&input)
        .args(["--block-size", "2", "--report"])
        .arg(&report_path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (c, _) = qasm::parse(&String::from_utf8(out.stdout).unwrap()).unwrap();
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["block_size"], 2);
    assert!(report["num_blocks"].as_u64().unwrap() >= 2);
    assert_eq!(report["distance_kind"], "block_sum");
    assert_eq!(c.num_params(), 1);
    assert_eq!(report["rz_after"], 1);
    assert!(report["direct_distance"].as_f64().unwrap() <= report["verified_distance"].as_f64().unwrap() + 1e-12);
}
