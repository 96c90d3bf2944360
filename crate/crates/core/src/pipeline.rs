//! End-to-end orchestration: seed → screen → bridge → transfer → assemble.
//!
//! Each stage writes one or more files into `out_dir` and then rewrites
//! `manifest.json`. A stage is skipped on a later run when its outputs exist,
//! the manifest carries the same config hash and lists the stage as
//! completed, and no upstream stage re-ran. One JSON event per stage
//! transition is appended to `events.jsonl`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bridge::{strip_to_format, validate_bridge, Synthesizer, SynthesisError};
use crate::config::{ConfigError, PipelineConfig, TransferMode};
use crate::dataset::{assemble, build_schedule, dataset_file_name, AlignmentMode, AssembleOptions, CurriculumSchedule, Dataset, DatasetError, Record};
use crate::gateway::Gateway;
use crate::jsonl::{self, JsonlError};
use crate::model::{CodeBridge, DatasetManifest, ExampleMode, ScreeningVerdict, StageCounts, TargetSolution, Task, TaskSource, TrainingExample};
use crate::screening::{partition, Screener, ScreeningError};
use crate::transfer::{TransferError, Transferer};
use crate::validate::validate_record;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SCHEDULE_FILE: &str = "schedule.json";
pub const EVENTS_FILE: &str = "events.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Seed,
    Screen,
    Bridge,
    Transfer,
    Assemble,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Seed, Stage::Screen, Stage::Bridge, Stage::Transfer, Stage::Assemble];

    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Seed => "seed",
            Stage::Screen => "screen",
            Stage::Bridge => "bridge",
            Stage::Transfer => "transfer",
            Stage::Assemble => "assemble",
        }
    }

    /// Files the stage writes, relative to `out_dir`.
    pub fn outputs(&self, config: &PipelineConfig) -> Vec<String> {
        match self {
            Stage::Seed => vec!["tasks.jsonl".into()],
            Stage::Screen => vec!["verdicts.jsonl".into()],
            Stage::Bridge => vec!["bridges.jsonl".into()],
            Stage::Transfer => vec!["solutions.jsonl".into()],
            Stage::Assemble => {
                let mut files: Vec<String> = config.alignment.phases().iter().map(|p| dataset_file_name(p)).collect();
                files.push(SCHEDULE_FILE.into());
                files
            }
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown stage {s:?} (seed, screen, bridge, transfer, assemble)"))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    InvalidInput { path: PathBuf, line: usize, message: String },
    #[error("stage {0} has not completed in this output directory; run it first")]
    StageMissing(Stage),
    #[error("screen: {0}")]
    Screening(ScreeningError),
    #[error("bridge: {0}")]
    Synthesis(SynthesisError),
    #[error("transfer: {0}")]
    Transfer(TransferError),
    #[error("assemble: {0}")]
    Dataset(DatasetError),
}

// Stage errors carry their cause in the message rather than as a source, so
// a printed error chain names the stage once.
macro_rules! stage_error {
    ($($err:ty => $variant:ident),*) => {$(
        impl From<$err> for PipelineError {
            fn from(e: $err) -> Self {
                PipelineError::$variant(e)
            }
        }
    )*};
}

stage_error!(ScreeningError => Screening, SynthesisError => Synthesis, TransferError => Transfer, DatasetError => Dataset);

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Stages to run unconditionally; the others are loaded from `out_dir`.
    /// `None` runs everything under the resume rule.
    pub stages: Option<Vec<Stage>>,
    /// Manifest creation timestamp; defaults to `SOURCE_DATE_EPOCH` or now.
    pub created_at: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest: DatasetManifest,
    pub ran: Vec<Stage>,
    pub loaded: Vec<Stage>,
}

/// A seed-corpus line. Only `instruction` is required.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SeedRecord {
    id: Option<String>,
    instruction: String,
    source: Option<TaskSource>,
    #[serde(default)]
    tags: Vec<String>,
}

/// Reads a seed corpus: blank instructions are errors, exact repeats are
/// dropped, and one id naming two instructions is an error.
pub fn read_seed_tasks(path: &Path) -> Result<Vec<Task>, PipelineError> {
    let lines = jsonl::read_raw(path)?;
    let mut tasks: Vec<Task> = Vec::with_capacity(lines.len());
    let mut seen: HashMap<String, String> = HashMap::new();
    for (line, text) in lines {
        let invalid = |message: String| PipelineError::InvalidInput { path: path.to_path_buf(), line, message };
        let rec: SeedRecord = serde_json::from_str(&text).map_err(|e| invalid(e.to_string()))?;
        let source = rec.source.unwrap_or(TaskSource::SeedCorpus);
        let mut task = Task::new(rec.instruction, source, rec.tags);
        if let Some(id) = rec.id {
            task.id = id;
        }
        let report = validate_record(&task);
        if !report.is_pass() {
            return Err(invalid(report.violations.join(", ")));
        }
        match seen.get(&task.id) {
            Some(instr) if *instr == task.instruction => continue,
            Some(_) => return Err(invalid(format!("id {} reused for a different instruction", task.id))),
            None => {
                seen.insert(task.id.clone(), task.instruction.clone());
                tasks.push(task);
            }
        }
    }
    Ok(tasks)
}

/// `SOURCE_DATE_EPOCH` when set, otherwise the current time.
pub fn default_timestamp() -> String {
    let epoch = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.parse::<i64>().ok());
    let at = epoch
        .and_then(|s| chrono::DateTime::from_timestamp(s, 0))
        .unwrap_or_else(chrono::Utc::now);
    at.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

#[derive(Default)]
struct State {
    tasks: Vec<Task>,
    verdicts: Vec<ScreeningVerdict>,
    kept: Vec<Task>,
    bridges: Vec<CodeBridge>,
    solutions: Vec<TargetSolution>,
    datasets: Vec<Dataset>,
}

struct Run<'a> {
    config: &'a PipelineConfig,
    out: &'a Path,
    gateway: Option<Gateway>,
    state: State,
}

impl Run<'_> {
    fn path(&self, file: &str) -> PathBuf {
        self.out.join(file)
    }

    fn gateway(&mut self) -> Result<&Gateway, PipelineError> {
        if self.gateway.is_none() {
            self.gateway = Some(self.config.build_gateway()?);
        }
        Ok(self.gateway.as_ref().expect("gateway built"))
    }

    fn apply_screening(&mut self) {
        self.state.kept = if self.config.screening {
            partition(&self.state.tasks, &self.state.verdicts).0
        } else {
            self.state.tasks.clone()
        };
    }

    fn execute(&mut self, stage: Stage) -> Result<(), PipelineError> {
        let config = self.config;
        match stage {
            Stage::Seed => {
                self.state.tasks = read_seed_tasks(&config.tasks)?;
                jsonl::write(&self.path("tasks.jsonl"), &self.state.tasks)?;
            }
            Stage::Screen => {
                self.state.verdicts = if config.screening {
                    let settings = config.models.screening();
                    let gateway = self.gateway()?.clone();
                    Screener::new(&gateway, settings).screen_all(&self.state.tasks, &config.target(), config.workers)?
                } else {
                    Vec::new()
                };
                self.apply_screening();
                jsonl::write(&self.path("verdicts.jsonl"), &self.state.verdicts)?;
            }
            Stage::Bridge => {
                self.state.bridges = if config.needs_bridges() {
                    let settings = config.models.synthesis();
                    let gateway = self.gateway()?.clone();
                    Synthesizer::new(&gateway, settings)
                        .synthesize_all(&self.state.kept, &config.bridge(), config.workers)?
                        .into_iter()
                        .flatten()
                        .collect()
                } else {
                    Vec::new()
                };
                jsonl::write(&self.path("bridges.jsonl"), &self.state.bridges)?;
            }
            Stage::Transfer => {
                let settings = config.models.transfer();
                let gateway = self.gateway()?.clone();
                let transferer = Transferer::new(&gateway, settings);
                let solved = match config.transfer_mode {
                    TransferMode::Bridge => {
                        let by_task: HashMap<&str, &CodeBridge> =
                            self.state.bridges.iter().map(|b| (b.task_id.as_str(), b)).collect();
                        let pairs: Vec<(Task, CodeBridge)> = self
                            .state
                            .kept
                            .iter()
                            .filter_map(|t| by_task.get(t.id.as_str()).map(|b| (t.clone(), (*b).clone())))
                            .collect();
                        transferer.transfer_all(&pairs, &config.target(), config.workers)?
                    }
                    TransferMode::Direct => transferer.direct_all(&self.state.kept, &config.target(), config.workers)?,
                };
                self.state.solutions = solved.into_iter().flatten().collect();
                jsonl::write(&self.path("solutions.jsonl"), &self.state.solutions)?;
            }
            Stage::Assemble => {
                let records = self.records();
                let opts = AssembleOptions {
                    assist_format: config.assist_format,
                    partition: config.partition,
                    seed: config.seed,
                    dedup: config.dedup,
                };
                let datasets = assemble(&records, config.alignment, &opts)?;
                let schedule = build_schedule(config.alignment, &config.epochs)?;
                self.remove_stale_datasets(&datasets)?;
                for d in &datasets {
                    jsonl::write(&self.path(&dataset_file_name(&d.phase_tag)), &d.examples)?;
                }
                write_json(&self.path(SCHEDULE_FILE), &schedule)?;
                self.state.datasets = datasets;
            }
        }
        Ok(())
    }

    /// Assembly input: every solution joined with its task and bridge.
    /// Records whose bridge is flagged, or empty in the configured assist
    /// format, are dropped when the alignment mode shows the bridge.
    fn records(&self) -> Vec<Record> {
        let config = self.config;
        let tasks: HashMap<&str, &Task> = self.state.kept.iter().map(|t| (t.id.as_str(), t)).collect();
        let by_id: HashMap<&str, &CodeBridge> = self.state.bridges.iter().map(|b| (b.id.as_str(), b)).collect();
        let by_task: HashMap<&str, &CodeBridge> = self.state.bridges.iter().map(|b| (b.task_id.as_str(), b)).collect();
        let mut records = Vec::new();
        for s in &self.state.solutions {
            let Some(task) = tasks.get(s.task_id.as_str()) else { continue };
            let bridge = match &s.bridge_id {
                Some(id) => by_id.get(id.as_str()),
                None => by_task.get(s.task_id.as_str()),
            }
            .map(|b| (*b).clone());
            if config.alignment.needs_bridge() {
                let Some(b) = &bridge else { continue };
                if !config.keep_flagged && !validate_bridge(b).is_clean() {
                    tracing::info!(task = %s.task_id, "dropping record with flagged bridge");
                    continue;
                }
                if config.alignment != AlignmentMode::Separate && strip_to_format(b, config.assist_format).is_err() {
                    tracing::info!(task = %s.task_id, format = %config.assist_format, "dropping record with empty assist bridge");
                    continue;
                }
            }
            records.push(Record { task: (*task).clone(), bridge, solution: s.clone() });
        }
        records
    }

    fn remove_stale_datasets(&self, keep: &[Dataset]) -> Result<(), PipelineError> {
        let keep: HashSet<String> = keep.iter().map(|d| dataset_file_name(&d.phase_tag)).collect();
        for phase in ["separate", "direct", "assist"] {
            let name = dataset_file_name(phase);
            let path = self.path(&name);
            if !keep.contains(&name) && path.exists() {
                std::fs::remove_file(&path).map_err(io_err(&path))?;
            }
        }
        Ok(())
    }

    fn load(&mut self, stage: Stage) -> Result<(), PipelineError> {
        match stage {
            Stage::Seed => self.state.tasks = jsonl::read(&self.path("tasks.jsonl"))?,
            Stage::Screen => {
                self.state.verdicts = jsonl::read(&self.path("verdicts.jsonl"))?;
                self.apply_screening();
            }
            Stage::Bridge => self.state.bridges = jsonl::read(&self.path("bridges.jsonl"))?,
            Stage::Transfer => self.state.solutions = jsonl::read(&self.path("solutions.jsonl"))?,
            Stage::Assemble => {
                self.state.datasets = self
                    .config
                    .alignment
                    .phases()
                    .iter()
                    .map(|p| {
                        Ok(Dataset {
                            phase_tag: p.to_string(),
                            examples: jsonl::read::<TrainingExample>(&self.path(&dataset_file_name(p)))?,
                        })
                    })
                    .collect::<Result<_, PipelineError>>()?;
            }
        }
        Ok(())
    }

    fn counts(&self, completed: &[Stage]) -> StageCounts {
        let done = |s: Stage| completed.contains(&s);
        let st = &self.state;
        let mut c = StageCounts::default();
        if done(Stage::Seed) {
            c.seeded = st.tasks.len() as u64;
        }
        if done(Stage::Screen) {
            c.screened_in = st.kept.len() as u64;
            c.screened_out = (st.tasks.len() - st.kept.len()) as u64;
        }
        if done(Stage::Bridge) {
            c.bridged = st.bridges.len() as u64;
        }
        if done(Stage::Transfer) {
            c.transferred = st.solutions.len() as u64;
        }
        if done(Stage::Assemble) {
            let solution_code: HashMap<&str, &str> =
                st.solutions.iter().map(|s| (s.task_id.as_str(), s.code.as_str())).collect();
            for ex in st.datasets.iter().flat_map(|d| &d.examples) {
                match ex.mode {
                    ExampleMode::Assist => c.emitted_assist += 1,
                    ExampleMode::Direct if solution_code.get(ex.task_id.as_str()) == Some(&ex.output.as_str()) => {
                        c.emitted_direct += 1
                    }
                    ExampleMode::Direct => c.emitted_bridge += 1,
                }
            }
        }
        c
    }

    fn model_ids(&self, completed: &[Stage]) -> BTreeMap<String, String> {
        let c = self.config;
        let mut ids = BTreeMap::new();
        if completed.contains(&Stage::Screen) && c.screening {
            ids.insert("screening".into(), c.models.screening().model_id);
        }
        if completed.contains(&Stage::Bridge) && c.needs_bridges() {
            ids.insert("synthesis".into(), c.models.synthesis().model_id);
        }
        if completed.contains(&Stage::Transfer) {
            ids.insert("transfer".into(), c.models.transfer().model_id);
        }
        ids
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    jsonl::write_bytes(path, text.as_bytes()).map_err(PipelineError::from)
}

pub fn read_manifest(out_dir: &Path) -> Option<DatasetManifest> {
    let text = std::fs::read_to_string(out_dir.join(MANIFEST_FILE)).ok()?;
    match serde_json::from_str(&text) {
        Ok(m) => Some(m),
        Err(e) => {
            tracing::warn!("ignoring unreadable manifest: {e}");
            None
        }
    }
}

pub fn read_schedule(out_dir: &Path) -> Result<CurriculumSchedule, PipelineError> {
    let path = out_dir.join(SCHEDULE_FILE);
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::InvalidInput { path, line: e.line(), message: e.to_string() })
}

struct Events {
    path: PathBuf,
}

impl Events {
    fn emit(&self, event: &str, stage: Stage, extra: serde_json::Value) {
        let mut line = serde_json::json!({
            "ts": chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            "event": event,
            "stage": stage.as_str(),
        });
        if let (Some(obj), serde_json::Value::Object(more)) = (line.as_object_mut(), extra) {
            obj.extend(more);
        }
        let written = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .and_then(|mut f| writeln!(f, "{line}"));
        if let Err(e) = written {
            tracing::warn!("cannot append to {}: {e}", self.path.display());
        }
    }
}

/// Runs the pipeline described by `config`.
pub fn run_pipeline(config: &PipelineConfig, options: &RunOptions) -> Result<RunOutcome, PipelineError> {
    config.validate()?;
    let hash = config.config_hash()?;
    let out = config.out_dir.as_path();
    std::fs::create_dir_all(out).map_err(io_err(out))?;

    let prior = read_manifest(out);
    let prior_completed: HashSet<String> =
        prior.as_ref().map(|m| m.completed_stages.iter().cloned().collect()).unwrap_or_default();
    let same_config = prior.as_ref().is_some_and(|m| m.pipeline_config_hash == hash);
    let created_at = match (&prior, same_config) {
        (Some(m), true) => m.created_at.clone(),
        _ => options.created_at.clone().unwrap_or_else(default_timestamp),
    };
    let last_requested = options.stages.as_ref().and_then(|s| s.iter().max().copied());

    let events = Events { path: out.join(EVENTS_FILE) };
    let mut run = Run { config, out, gateway: None, state: State::default() };
    let mut completed: Vec<Stage> = Vec::new();
    let mut ran = Vec::new();
    let mut loaded = Vec::new();

    for stage in Stage::ALL {
        if last_requested.is_some_and(|last| stage > last) {
            break;
        }
        let outputs_exist = stage.outputs(config).iter().all(|f| out.join(f).is_file());
        let was_completed = prior_completed.contains(stage.as_str());
        let execute = match &options.stages {
            Some(requested) if requested.contains(&stage) => true,
            Some(_) => {
                if !(was_completed && outputs_exist) {
                    return Err(PipelineError::StageMissing(stage));
                }
                false
            }
            None => !(same_config && was_completed && outputs_exist && ran.is_empty()),
        };

        let started = Instant::now();
        if execute {
            events.emit("stage_started", stage, serde_json::json!({}));
            tracing::info!(%stage, "running");
            if let Err(e) = run.execute(stage) {
                events.emit("stage_failed", stage, serde_json::json!({ "error": e.to_string() }));
                return Err(e);
            }
            ran.push(stage);
        } else {
            run.load(stage)?;
            loaded.push(stage);
        }
        completed.push(stage);

        let manifest = DatasetManifest {
            pipeline_config_hash: hash.clone(),
            counts: run.counts(&completed),
            model_ids: run.model_ids(&completed),
            created_at: created_at.clone(),
            completed_stages: completed.iter().map(|s| s.as_str().to_string()).collect(),
        };
        write_json(&out.join(MANIFEST_FILE), &manifest)?;
        let event = if execute { "stage_completed" } else { "stage_skipped" };
        events.emit(
            event,
            stage,
            serde_json::json!({ "elapsed_ms": started.elapsed().as_millis() as u64, "counts": manifest.counts }),
        );
        tracing::info!(%stage, "{}", event.trim_start_matches("stage_"));
    }

    let manifest = read_manifest(out).ok_or(PipelineError::StageMissing(Stage::Seed))?;
    Ok(RunOutcome { manifest, ran, loaded })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_round_trip() {
        for s in Stage::ALL {
            assert_eq!(s.as_str().parse::<Stage>().unwrap(), s);
        }
        assert!("train".parse::<Stage>().is_err());
    }

    #[test]
    fn seed_reader_fills_ids_and_drops_repeats() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        std::fs::write(
            &path,
            "{\"instruction\":\"Reverse a string.\"}\n{\"instruction\":\"Reverse a string.\"}\n{\"instruction\":\"Sum a list.\",\"tags\":[\"x\"]}\n",
        )
        .unwrap();
        let tasks = read_seed_tasks(&path).unwrap();
        assert_eq!(tasks.len(), 2);
        assert_eq!(tasks[0].id, Task::content_id("Reverse a string.", TaskSource::SeedCorpus));
        assert_eq!(tasks[1].tags, vec!["x"]);
    }

    #[test]
    fn seed_reader_reports_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        std::fs::write(&path, "{\"instruction\":\"ok\"}\n{\"instruction\":\"   \"}\n").unwrap();
        match read_seed_tasks(&path) {
            Err(PipelineError::InvalidInput { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("instruction empty"));
            }
            other => panic!("unexpected {other:?}"),
        }
        std::fs::write(&path, "{\"id\":\"a\",\"instruction\":\"x\"}\n{\"id\":\"a\",\"instruction\":\"y\"}\n").unwrap();
        assert!(matches!(read_seed_tasks(&path), Err(PipelineError::InvalidInput { line: 2, .. })));
    }

    #[test]
    fn assemble_outputs_follow_alignment() {
        let mut c = PipelineConfig::new("t", crate::model::LanguageName::Racket);
        assert_eq!(Stage::Assemble.outputs(&c), vec!["dataset-assist.jsonl", "dataset-direct.jsonl", "schedule.json"]);
        c.alignment = AlignmentMode::Separate;
        assert_eq!(Stage::Assemble.outputs(&c), vec!["dataset-separate.jsonl", "schedule.json"]);
    }
}
