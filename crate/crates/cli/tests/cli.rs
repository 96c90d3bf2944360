use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bridge-coder")).args(args).output().expect("spawn cli")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Runs the sample pipeline into a fresh directory.
fn sample_run(extra: &[&str]) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config = root().join("data/sample/pipeline.toml");
    let mut args = vec!["run", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = bin(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    (dir, out)
}

#[test]
fn run_writes_a_valid_run_directory() {
    let (_dir, out) = sample_run(&[]);
    for f in ["tasks.jsonl", "verdicts.jsonl", "bridges.jsonl", "solutions.jsonl", "dataset-assist.jsonl", "dataset-direct.jsonl", "schedule.json", "manifest.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let o = bin(&["validate", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "ok");
}

#[test]
fn assemble_bridged_emits_two_datasets() {
    let (_dir, out) = sample_run(&["--alignment", "direct"]);
    assert!(!out.join("dataset-assist.jsonl").exists());
    let config = root().join("data/sample/pipeline.toml");
    let o = bin(&["assemble", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap(), "--mode", "bridged"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let lines = |f: &str| std::fs::read_to_string(out.join(f)).unwrap().lines().count();
    assert_eq!(lines("dataset-assist.jsonl"), lines("dataset-direct.jsonl"));
    assert!(lines("dataset-assist.jsonl") > 0);
}

#[test]
fn validate_reports_the_corrupted_line() {
    let (_dir, out) = sample_run(&[]);
    let path = out.join("tasks.jsonl");
    let mut lines: Vec<String> = std::fs::read_to_string(&path).unwrap().lines().map(String::from).collect();
    lines[2] = lines[2].replacen('{', "[", 1);
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    let o = bin(&["validate", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("tasks.jsonl:3:"), "{}", stderr(&o));
}

#[test]
fn validate_flags_a_bridge_in_direct_data() {
    let (_dir, out) = sample_run(&[]);
    let path = out.join("dataset-direct.jsonl");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    first["input"] = format!("{}\nyou can refer to this solution in Python", first["input"].as_str().unwrap()).into();
    let rest: Vec<&str> = text.lines().skip(1).collect();
    std::fs::write(&path, format!("{first}\n{}\n", rest.join("\n"))).unwrap();
    let o = bin(&["validate", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("dataset-direct.jsonl:1:"), "{}", stderr(&o));
}

#[test]
fn evaluate_scores_the_toy_benchmark() {
    let bench = root().join("data/bench");
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let o = bin(&[
        "evaluate",
        "--benchmark", bench.join("bash-toy.jsonl").to_str().unwrap(),
        "--language", "bash",
        "--candidates", bench.join("bash-toy.mixed.jsonl").to_str().unwrap(),
        "--k", "1,2",
        "--report", report.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["pass_at_k"]["pass@1"], 0.5);
    assert_eq!(r["pass_at_k"]["pass@2"], 1.0);
}

#[test]
fn evaluate_without_toolchain_lists_runnable_languages() {
    if Command::new("racket").arg("--version").output().is_ok() {
        return;
    }
    let bench = root().join("data/bench");
    let o = bin(&[
        "evaluate",
        "--benchmark", bench.join("bash-toy.jsonl").to_str().unwrap(),
        "--language", "racket",
        "--candidates", bench.join("bash-toy.correct.jsonl").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("runnable languages: bash"), "{}", stderr(&o));
}

#[test]
fn bad_config_fails_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "tasks = \"t.jsonl\"\ntarget_language = \"racket\"\nbogus_key = 1\n").unwrap();
    let o = bin(&["run", "--config", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bogus_key"), "{}", stderr(&o));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(bin(&["run", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(bin(&[]).status.code(), Some(2));
}
