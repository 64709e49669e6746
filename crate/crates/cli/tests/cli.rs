use std::path::Path;
use std::process::{Command, Output};

fn fieldlab(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fieldlab")).args(args).current_dir(cwd).output().unwrap()
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn identical_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("sim.json");
    std::fs::write(
        &cfg,
        r#"{"experiment": "simulate-field", "seed": 11, "windows": [[8, 8], [4, 12]], "replications": 300,
            "truncation": {"k_max": 10, "lag_max": 6}, "formats": ["csv", "json", "svg"], "save_samples": true}"#,
    )
    .unwrap();
    for out in ["a", "b"] {
        let o = fieldlab(&["simulate-field", "--config", "sim.json", "--out", out, "--threads", "2"], tmp.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = read_dir_sorted(&tmp.path().join("a"));
    let b = read_dir_sorted(&tmp.path().join("b"));
    assert!(a.iter().any(|(n, _)| n == "manifest.json"));
    assert_eq!(a, b);

    let o = fieldlab(&["simulate-field", "--config", "sim.json", "--out", "c", "--seed", "12"], tmp.path());
    assert!(o.status.success());
    let c = read_dir_sorted(&tmp.path().join("c"));
    let summary = |v: &[(String, Vec<u8>)]| v.iter().find(|(n, _)| n == "simulate_summary.csv").unwrap().1.clone();
    assert_ne!(summary(&a), summary(&c));
}

#[test]
fn empty_config_points_at_experiment() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("empty.json"), "").unwrap();
    let o = fieldlab(&["report", "--config", "empty.json", "--out", "r"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("`experiment`"), "{err}");
    assert!(!tmp.path().join("r").exists());
}

#[test]
fn unknown_key_and_mismatched_subcommand() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("bad.json"), r#"{"experiment": "report", "seed": 1, "windos": []}"#).unwrap();
    let o = fieldlab(&["report", "--config", "bad.json"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("windos"));

    std::fs::write(tmp.path().join("rep.json"), r#"{"experiment": "report", "seed": 1}"#).unwrap();
    let o = fieldlab(&["decompose", "--config", "rep.json"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn self_test_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = fieldlab(&["self-test"], tmp.path());
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("coboundary identity") && !text.contains("FAIL"));
}

#[test]
fn counterexample_summary_has_reference() {
    let tmp = tempfile::tempdir().unwrap();
    let o = fieldlab(&["counterexample", "--seed", "2024", "--out", "cx", "--format", "json"], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(tmp.path().join("cx/counterexample.json")).unwrap();
    assert!(text.contains("\"exceedance_half\"") && text.contains("\"reference\""));
    assert!(!tmp.path().join("cx/counterexample_grid.csv").exists());
}
