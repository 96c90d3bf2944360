#![allow(dead_code)]

use std::path::{Path, PathBuf};

use bridge_coder_core::config::PipelineConfig;
use bridge_coder_core::jsonl;
use bridge_coder_core::model::{CodeBridge, LanguageName, ScreeningVerdict, TargetSolution, Task, TrainingExample};
use bridge_coder_core::validate::{validate_record, Validate};
use bridge_coder_core::script::{build_fixtures, ScriptedTask};

pub const FIXED_TIMESTAMP: &str = "2024-01-01T00:00:00Z";

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn core_tests_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests")
}

pub fn sample_script() -> Vec<ScriptedTask> {
    jsonl::read(&workspace_root().join("data/sample/script.jsonl")).expect("sample script")
}

/// Writes the corpus and the mock fixtures for `script` into `dir` and
/// returns a default config for a Racket run that outputs to `dir/out`.
pub fn mock_config(dir: &Path, script: &[ScriptedTask]) -> PipelineConfig {
    let mut config = PipelineConfig::new(dir.join("tasks.jsonl"), LanguageName::Racket);
    let fixtures = build_fixtures(script, &config.target(), &config.bridge()).expect("fixtures");
    let tasks: Vec<Task> = script.iter().map(ScriptedTask::task).collect();
    jsonl::write(&config.tasks, &tasks).expect("write tasks");
    let fixtures_path = dir.join("fixtures.json");
    std::fs::write(&fixtures_path, fixtures.to_json()).expect("write fixtures");
    config.provider.fixtures = Some(fixtures_path);
    config.out_dir = dir.join("out");
    config
}

/// Every regular file in `dir` except the event log, sorted by name.
pub fn stage_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .expect("read out dir")
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.is_file() && p.file_name().is_some_and(|n| n != "events.jsonl"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn check_all<R: Validate + serde::de::DeserializeOwned>(path: &Path) {
    if !path.is_file() {
        return;
    }
    for (i, record) in jsonl::read::<R>(path).expect("parse stage file").iter().enumerate() {
        let report = validate_record(record);
        assert!(report.is_pass(), "{}:{}: {:?}", path.display(), i + 1, report.violations);
    }
}

/// Asserts every record and the manifest in a run directory pass validation.
pub fn assert_valid(dir: &Path) {
    check_all::<Task>(&dir.join("tasks.jsonl"));
    check_all::<ScreeningVerdict>(&dir.join("verdicts.jsonl"));
    check_all::<CodeBridge>(&dir.join("bridges.jsonl"));
    check_all::<TargetSolution>(&dir.join("solutions.jsonl"));
    for entry in std::fs::read_dir(dir).expect("read out dir") {
        let path = entry.expect("dir entry").path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        if name.starts_with("dataset-") {
            check_all::<TrainingExample>(&path);
        }
    }
    let manifest = bridge_coder_core::pipeline::read_manifest(dir).expect("manifest");
    let report = validate_record(&manifest);
    assert!(report.is_pass(), "manifest: {:?}", report.violations);
}
