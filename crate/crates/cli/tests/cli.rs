use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lossless-hedge"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn predict_all_ones_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = run(&[
        "predict",
        "--T",
        "10000",
        "--epsilon",
        "0.05",
        "--generator",
        "constant:1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stdout(&o));
    let s = summary(&out);
    assert!(s["regret_to_S_plus"].as_f64().unwrap() <= 4.0 * 0.05 * 10_000.0);
    assert_eq!(s["pass"], true);
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("#lhv1 "));
    assert_eq!(trace.lines().count(), 10_002);
    assert!(out.join("report.txt").exists());
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let o = run(&[
            "combine",
            "--N",
            "3",
            "--T",
            "3000",
            "--seed",
            "5",
            "--generator",
            "shifting:3:0.6,0,-0.6",
            "--out",
            d.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stdout(&o));
    }
    for f in ["trace.csv", "summary.json", "report.txt"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn spec_file_reproduces_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let o = run(&[
        "predict",
        "--T",
        "2000",
        "--Z",
        "0.001",
        "--seed",
        "3",
        "--out",
        first.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let second = dir.path().join("second");
    let spec = first.join("spec.json");
    let o = run(&[
        "predict",
        "--spec",
        spec.to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        std::fs::read(first.join("trace.csv")).unwrap(),
        std::fs::read(second.join("trace.csv")).unwrap()
    );
}

#[test]
fn unknown_generator_is_named() {
    let o = run(&["predict", "--generator", "gaussian:1"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("gaussian"));
}

#[test]
fn missing_file_error_names_the_path() {
    let o = run(&["predict", "--generator", "file:/nonexistent/seq.txt"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/seq.txt"));
}

#[test]
fn accept_passes_selected_criteria() {
    let o = bin().args(["accept", "A1,A4"]).env("LH_THREADS", "2").output().unwrap();
    let text = stdout(&o);
    assert!(o.status.success(), "{text}");
    assert!(text.contains("PASS A1") && text.contains("PASS A4"));
}

#[test]
fn injected_sign_bug_fails_a3() {
    let o = run(&["accept", "A3", "--inject-sign-bug"]);
    assert!(!o.status.success());
    let text = stdout(&o);
    assert!(text.contains("FAIL A3"), "{text}");
    assert!(text.contains("failed: A3"));
}

#[test]
fn bad_thread_count_is_rejected() {
    let o = bin().args(["accept", "A4"]).env("LH_THREADS", "many").output().unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("LH_THREADS"));
}
