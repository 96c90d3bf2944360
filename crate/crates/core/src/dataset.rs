//! Training-set assembly under the four alignment modes, and the curriculum
//! schedule that orders them.
//!
//! | mode     | examples per record                                   |
//! |----------|-------------------------------------------------------|
//! | direct   | instruction → target                                  |
//! | assist   | instruction + bridge → target                         |
//! | separate | instruction → bridge, instruction → target            |
//! | bridged  | an assist dataset, then a direct dataset              |

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bridge::{strip_to_format, AssistFormat};
use crate::model::{content_hash, CodeBridge, ExampleMode, TargetSolution, Task, TrainingExample, BRIDGE_MARKER};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DatasetError {
    #[error("record for task {0} has no bridge, which {1} alignment requires")]
    MissingBridge(String, AlignmentMode),
    #[error("no records to assemble")]
    EmptyCorpus,
    #[error("bridge for task {task_id} is empty in {format} format")]
    EmptyAssist { task_id: String, format: AssistFormat },
    #[error("epochs for phase {phase} must be a positive number, got {value}")]
    InvalidEpochs { phase: String, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlignmentMode {
    Separate,
    Direct,
    Assist,
    #[default]
    Bridged,
}

impl AlignmentMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            AlignmentMode::Separate => "separate",
            AlignmentMode::Direct => "direct",
            AlignmentMode::Assist => "assist",
            AlignmentMode::Bridged => "bridged",
        }
    }

    /// Phase tags in training order.
    pub fn phases(&self) -> &'static [&'static str] {
        match self {
            AlignmentMode::Separate => &["separate"],
            AlignmentMode::Direct => &["direct"],
            AlignmentMode::Assist => &["assist"],
            AlignmentMode::Bridged => &["assist", "direct"],
        }
    }

    pub fn needs_bridge(&self) -> bool {
        !matches!(self, AlignmentMode::Direct)
    }
}

impl fmt::Display for AlignmentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AlignmentMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "separate" => Ok(AlignmentMode::Separate),
            "direct" => Ok(AlignmentMode::Direct),
            "assist" => Ok(AlignmentMode::Assist),
            "bridged" => Ok(AlignmentMode::Bridged),
            _ => Err(format!("unknown alignment mode {s:?} (separate, direct, assist, bridged)")),
        }
    }
}

pub fn dataset_file_name(phase_tag: &str) -> String {
    format!("dataset-{phase_tag}.jsonl")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub task: Task,
    pub bridge: Option<CodeBridge>,
    pub solution: TargetSolution,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub phase_tag: String,
    pub examples: Vec<TrainingExample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssembleOptions {
    pub assist_format: AssistFormat,
    /// Bridged mode only: split records between the phases instead of
    /// showing every record in both.
    pub partition: bool,
    /// Seed for the example ordering.
    pub seed: u64,
    pub dedup: bool,
}

impl Default for AssembleOptions {
    fn default() -> Self {
        Self { assist_format: AssistFormat::NlPlusPl, partition: false, seed: 0, dedup: true }
    }
}

/// Instruction followed by the bridge in `format`, introduced by the marker line.
pub fn assist_input(task: &Task, bridge: &CodeBridge, format: AssistFormat) -> Result<String, DatasetError> {
    let body = strip_to_format(bridge, format)
        .map_err(|_| DatasetError::EmptyAssist { task_id: task.id.clone(), format })?;
    let label = match format {
        AssistFormat::NlOnly => "text",
        _ => bridge.language.name.as_str(),
    };
    Ok(format!(
        "{}\n\nTo help you better solve this task, {BRIDGE_MARKER} {}:\n```{label}\n{body}\n```",
        task.instruction,
        bridge.language.display_name(),
    ))
}

fn direct_example(r: &Record, phase_tag: &str) -> TrainingExample {
    TrainingExample {
        input: r.task.instruction.clone(),
        output: r.solution.code.clone(),
        mode: ExampleMode::Direct,
        task_id: r.task.id.clone(),
        phase_tag: phase_tag.to_string(),
    }
}

fn assist_example(r: &Record, bridge: &CodeBridge, format: AssistFormat) -> Result<TrainingExample, DatasetError> {
    Ok(TrainingExample {
        input: assist_input(&r.task, bridge, format)?,
        output: r.solution.code.clone(),
        mode: ExampleMode::Assist,
        task_id: r.task.id.clone(),
        phase_tag: "assist".to_string(),
    })
}

fn order_key(seed: u64, task_id: &str) -> String {
    content_hash(&[&seed.to_string(), task_id])
}

/// Stable sort by the seeded hash of the task id.
fn order(examples: &mut [TrainingExample], seed: u64) {
    examples.sort_by_cached_key(|e| order_key(seed, &e.task_id));
}

/// Removes repeated `(input, output)` pairs, keeping the first.
pub fn dedup(dataset: Dataset) -> Dataset {
    let mut seen = HashSet::new();
    let examples = dataset
        .examples
        .into_iter()
        .filter(|e| seen.insert((e.input.clone(), e.output.clone())))
        .collect();
    Dataset { phase_tag: dataset.phase_tag, examples }
}

/// Builds the dataset(s) for `mode`: one for separate/direct/assist, two
/// (assist then direct) for bridged.
pub fn assemble(records: &[Record], mode: AlignmentMode, opts: &AssembleOptions) -> Result<Vec<Dataset>, DatasetError> {
    if records.is_empty() {
        return Err(DatasetError::EmptyCorpus);
    }
    let bridge_of = |r: &Record| -> Result<CodeBridge, DatasetError> {
        r.bridge.clone().ok_or_else(|| DatasetError::MissingBridge(r.task.id.clone(), mode))
    };
    if mode.needs_bridge() {
        for r in records {
            bridge_of(r)?;
        }
    }

    let mut datasets = match mode {
        AlignmentMode::Direct => vec![Dataset {
            phase_tag: "direct".into(),
            examples: records.iter().map(|r| direct_example(r, "direct")).collect(),
        }],
        AlignmentMode::Assist => vec![Dataset {
            phase_tag: "assist".into(),
            examples: records
                .iter()
                .map(|r| assist_example(r, &bridge_of(r)?, opts.assist_format))
                .collect::<Result<_, _>>()?,
        }],
        AlignmentMode::Separate => {
            let mut examples = Vec::with_capacity(records.len() * 2);
            for r in records {
                let bridge = bridge_of(r)?;
                examples.push(TrainingExample {
                    input: r.task.instruction.clone(),
                    output: bridge.code.clone(),
                    mode: ExampleMode::Direct,
                    task_id: r.task.id.clone(),
                    phase_tag: "separate".into(),
                });
                examples.push(direct_example(r, "separate"));
            }
            vec![Dataset { phase_tag: "separate".into(), examples }]
        }
        AlignmentMode::Bridged => {
            let (assist_records, direct_records): (Vec<&Record>, Vec<&Record>) = if opts.partition {
                let mut ordered: Vec<&Record> = records.iter().collect();
                ordered.sort_by_cached_key(|r| order_key(opts.seed, &r.task.id));
                let (a, d): (Vec<_>, Vec<_>) = ordered.into_iter().enumerate().partition(|(i, _)| i % 2 == 0);
                (a.into_iter().map(|(_, r)| r).collect(), d.into_iter().map(|(_, r)| r).collect())
            } else {
                (records.iter().collect(), records.iter().collect())
            };
            vec![
                Dataset {
                    phase_tag: "assist".into(),
                    examples: assist_records
                        .iter()
                        .map(|r| assist_example(r, &bridge_of(r)?, opts.assist_format))
                        .collect::<Result<_, _>>()?,
                },
                Dataset {
                    phase_tag: "direct".into(),
                    examples: direct_records.iter().map(|r| direct_example(r, "direct")).collect(),
                },
            ]
        }
    };

    for d in &mut datasets {
        if opts.dedup {
            *d = dedup(std::mem::replace(d, Dataset { phase_tag: String::new(), examples: vec![] }));
        }
        order(&mut d.examples, opts.seed);
    }
    Ok(datasets)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub phase_tag: String,
    pub dataset_ref: String,
    pub epochs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumSchedule {
    pub mode: AlignmentMode,
    pub phases: Vec<Phase>,
}

/// Phases in training order. Phases missing from `epochs_per_phase` get one epoch.
pub fn build_schedule(
    mode: AlignmentMode,
    epochs_per_phase: &BTreeMap<String, f64>,
) -> Result<CurriculumSchedule, DatasetError> {
    let phases = mode
        .phases()
        .iter()
        .map(|tag| {
            let epochs = epochs_per_phase.get(*tag).copied().unwrap_or(1.0);
            if !(epochs.is_finite() && epochs > 0.0) {
                return Err(DatasetError::InvalidEpochs { phase: tag.to_string(), value: epochs });
            }
            Ok(Phase { phase_tag: tag.to_string(), dataset_ref: dataset_file_name(tag), epochs })
        })
        .collect::<Result<_, _>>()?;
    Ok(CurriculumSchedule { mode, phases })
}
