use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn extprob(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_extprob")).args(args).output().unwrap()
}

fn models() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

fn model(name: &str) -> String {
    models().join(name).display().to_string()
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn stderr_error(out: &Output) -> Value {
    let v: Value = serde_json::from_slice(&out.stderr).unwrap();
    v["error"].clone()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn eval_csv_sums_to_one() {
    let out = extprob(&["eval", "--model", &model("threebox.model")]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("history,ep,dh"));
    assert!(text.contains("\"C,Phi\",-0.111"));
    let total: f64 = lines.map(|l| l.rsplit(',').nth(1).unwrap().parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn decohere_reports_three_box_interference() {
    let v = stdout_json(&extprob(&["decohere", "--model", &model("threebox.model")]));
    assert_eq!(v["medium_decoherent"], false);
    assert_eq!(v["linearly_positive"], false);
    let v = stdout_json(&extprob(&["decohere", "--model", &model("threebox.model"), "--partition", "Aset"]));
    assert_eq!(v["medium_decoherent"], true);
}

#[test]
fn threebox_table() {
    let v = stdout_json(&extprob(&["threebox"]));
    let c = v["conditionals"].as_array().unwrap();
    assert!((c[2].as_f64().unwrap() + 1.0).abs() < 1e-12);
}

#[test]
fn records_on_interfering_set_exits_4() {
    let out = extprob(&["records", "--model", &model("threebox.model")]);
    assert_eq!(out.status.code(), Some(4));
    let e = stderr_error(&out);
    assert_eq!(e["exit_code"], 4);
    assert!(e["max_off_diagonal"].as_f64().unwrap() > 0.1);
    assert!(!e["offending"].as_array().unwrap().is_empty());
}

#[test]
fn records_on_coarse_set_succeed() {
    let v = stdout_json(&extprob(&["records", "--model", &model("threebox.model"), "--partition", "Bset"]));
    assert_eq!(v["strong"]["pass"], true);
}

#[test]
fn parse_error_exits_2_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "bad.model", "dim 2\nstate [1, 0, 0]\n");
    let out = extprob(&["eval", "--model", &path]);
    assert_eq!(out.status.code(), Some(2));
    let e = stderr_error(&out);
    assert_eq!(e["line"], 2);
    assert!(e["column"].as_u64().unwrap() >= 1);
}

#[test]
fn invariant_violation_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(
        dir.path(),
        "incomplete.model",
        "dim 2\nstate [1, 0]\nslot 1\nproj a = basis 0\n",
    );
    let out = extprob(&["eval", "--model", &path]);
    assert_eq!(out.status.code(), Some(3));
    let e = stderr_error(&out);
    assert_eq!(e["invariant"], "completeness");
    assert!((e["magnitude"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn history_cap_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("dim 2\nstate [1, 0]\n");
    for t in 1..=13 {
        text.push_str(&format!("slot {t}\nproj u{t} = basis 0\nproj d{t} = basis 1\n"));
    }
    let path = write(dir.path(), "long.model", &text);
    let out = extprob(&["eval", "--model", &path]);
    assert_eq!(out.status.code(), Some(5));
    assert_eq!(stderr_error(&out)["cap"], 4096);
}

#[test]
fn untiled_bins_exit_1() {
    let out = extprob(&["twoslit", "--kDelta", "7"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_error(&out)["exit_code"], 1);
}

#[test]
fn twoslit_sign_claims() {
    let bins = |kd: &str| -> Vec<f64> {
        let out = extprob(&["twoslit", "--kDelta", kd]);
        assert!(out.status.success());
        String::from_utf8(out.stdout)
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
            .collect()
    };
    assert!(bins("5").iter().any(|&p| p < 0.0));
    assert!(bins("20").iter().all(|&p| p > 0.0));
}

#[test]
fn dutchbook_sure_loss_for_negative_probability() {
    let out = extprob(&["dutchbook", "--pA", "-0.5", "--stakeA", "-2"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let g_a: f64 = row[col("gain_a")].parse().unwrap();
    let g_not: f64 = row[col("gain_not_a")].parse().unwrap();
    assert!(g_a < 0.0 && g_not < 0.0);
    assert!((g_a + 3.0).abs() < 1e-14);
}

#[test]
fn composite_reports() {
    let v = stdout_json(&extprob(&["composite", "--model", &model("recorded/joint.model")]));
    assert_eq!(v["records"]["recorded"], true);
    let v = stdout_json(&extprob(&["composite", "--model", &model("product_rule/joint.model")]));
    assert!(v["max_violation"].as_f64().unwrap() >= 0.01);
    assert_eq!(v["records"]["recorded"], false);
}

#[test]
fn manifest_replay_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out_str = out_dir.display().to_string();
    let status = extprob(&["--out", &out_str, "--tol", "1e-9", "coarsen", "--seed", "21", "--dim", "3"]).status;
    assert!(status.success());
    let manifest: Value = serde_json::from_slice(&std::fs::read(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "coarsen");
    assert_eq!(manifest["seed"], 21);
    assert_eq!(manifest["tolerance"], 1e-9);
    assert_eq!(manifest["argv"][0], "extprob");
    let first = std::fs::read(out_dir.join("coarsen.json")).unwrap();
    std::fs::remove_file(out_dir.join("coarsen.json")).unwrap();
    let replay = extprob(&["run", &out_dir.join("manifest.json").display().to_string()]);
    assert!(replay.status.success());
    assert_eq!(std::fs::read(out_dir.join("coarsen.json")).unwrap(), first);
}

#[test]
fn finegrained_writes_both_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fg");
    let status = extprob(&["--out", &out.display().to_string(), "finegrained", "--model", &model("rotated_qubit.model")])
        .status;
    assert!(status.success());
    let report: Value = serde_json::from_slice(&std::fs::read(out.join("finegrained.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
    let csv = std::fs::read_to_string(out.join("finegrained.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 8);
}
