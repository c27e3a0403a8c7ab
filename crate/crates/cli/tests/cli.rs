use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn jumper(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jumper"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn value<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing from\n{text}"))
}

fn synth(dir: &Path, length: &str, alpha: &str) -> String {
    let path = dir.join("stream.csv");
    let path = path.to_str().unwrap().to_string();
    let out = jumper(&[
        "synth", "--length", length, "--alpha", alpha, "--seed", "3", "-o", &path,
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    path
}

#[test]
fn synth_then_test_detects_drift() {
    let dir = tempfile::tempdir().unwrap();
    let stream = synth(dir.path(), "20000", "1");
    let traj = dir.path().join("traj.csv");
    let out = jumper(&["test", &stream, "-o", traj.to_str().unwrap()]);
    assert!(out.status.success());
    let text = stdout(&out);
    let log: f64 = value(&text, "log_composite").parse().unwrap();
    assert!(log > 10.0, "{text}");
    assert!(value(&text, "log_J_0.01").parse::<f64>().is_ok());
    let csv = fs::read_to_string(traj).unwrap();
    assert!(csv.starts_with("step,log10_composite,"));
    assert_eq!(csv.lines().count(), 20_001);
}

#[test]
fn protect_reports_identity_and_writes_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let stream = synth(dir.path(), "5000", "-1");
    let pred = dir.path().join("protected.csv");
    let out = jumper(&[
        "protect",
        &stream,
        "-o",
        pred.to_str().unwrap(),
        "--log-base",
        "e",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = stdout(&out);
    assert_eq!(value(&text, "log_base"), "e");
    assert_eq!(value(&text, "# mixing"), "every-prediction");
    let reduction: f64 = value(&text, "loss_reduction").parse().unwrap();
    let log10: f64 = value(&text, "log10_martingale").parse().unwrap();
    assert!((reduction - log10 * std::f64::consts::LN_10).abs() < 1e-8);
    let csv = fs::read_to_string(pred).unwrap();
    assert!(csv.starts_with("step,label,base_p,protected_p,fed_back"));
}

#[test]
fn protect_with_limited_feedback_and_frozen_mixing() {
    let dir = tempfile::tempdir().unwrap();
    let stream = synth(dir.path(), "2000", "1");
    let out = jumper(&[
        "protect",
        &stream,
        "--feedback-every",
        "100",
        "--freeze-mixing",
        "--pi",
        "0.3",
        "--jumps",
        "0.01,0.001",
        "--family",
        "cox-alpha:alpha=-1,0,1",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = stdout(&out);
    assert_eq!(value(&text, "# mixing"), "after-feedback");
    assert_eq!(value(&text, "feedback_steps"), "20");
    assert_eq!(value(&text, "jumps"), "0.01,0.001");
    assert_eq!(value(&text, "pi"), "0.3");
}

#[test]
fn certify_exit_code_follows_slack() {
    let dir = tempfile::tempdir().unwrap();
    let stream = synth(dir.path(), "3000", "1");
    let out = jumper(&["certify", &stream, "--member", "7"]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let text = stdout(&out);
    assert_eq!(value(&text, "holds"), "true");
    assert!(value(&text, "slack").parse::<f64>().unwrap() >= 0.0);

    let comparator = dir.path().join("cmp.txt");
    fs::write(&comparator, "4\n".repeat(2999)).unwrap();
    let out = jumper(&[
        "certify",
        &stream,
        "--comparator",
        comparator.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn shuffle_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let stream = synth(dir.path(), "4000", "1");
    let shuffled = dir.path().join("shuffled.csv");
    let out = jumper(&[
        "shuffle",
        &stream,
        "--seed",
        "5",
        "-o",
        shuffled.to_str().unwrap(),
    ]);
    assert!(out.status.success());

    let roc = dir.path().join("roc.csv");
    let avg = dir.path().join("avg.csv");
    let metrics = |path: &str, extra: &[&str]| {
        let mut args = vec!["metrics", path];
        args.extend_from_slice(extra);
        stdout(&jumper(&args))
    };
    let original = metrics(&stream, &[]);
    let permuted = metrics(
        shuffled.to_str().unwrap(),
        &[
            "--roc",
            roc.to_str().unwrap(),
            "--window",
            "1000",
            "--moving-average-out",
            avg.to_str().unwrap(),
        ],
    );
    let auc = |t: &str| value(t, "auc").parse::<f64>().unwrap();
    assert!(auc(&original) > 0.6);
    assert!((auc(&permuted) - 0.5).abs() < 0.05, "{permuted}");
    assert!(fs::read_to_string(roc).unwrap().starts_with("fpr,tpr"));
    assert_eq!(fs::read_to_string(avg).unwrap().lines().count(), 3002);
}

#[test]
fn run_experiment_from_config() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "1000", "1");
    let config = dir.path().join("exp.toml");
    fs::write(&config, "input = \"stream.csv\"\noutput_dir = \"out\"\n").unwrap();
    let out = jumper(&["run", config.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(value(&stdout(&out), "n"), "1000");
    assert!(dir.path().join("out/report.txt").is_file());
}

#[test]
fn rejects_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let stream = synth(dir.path(), "100", "1");
    let out = jumper(&["test", &stream, "--log-base", "2"]);
    assert!(!out.status.success());
    let out = jumper(&["test", &stream, "--pi", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
    let out = jumper(&["test", &stream, "--family", "cox:alpha=1;beta=1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("neutral"));
}
