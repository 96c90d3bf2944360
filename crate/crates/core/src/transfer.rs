//! Target-language generation, guided by a code-bridge or directly from the
//! instruction.

use crate::extract::{extract_code_blocks, select_code};
use crate::gateway::{ChatRequest, Gateway, GatewayError, ModelSettings};
use crate::model::{CodeBridge, LanguageId, Role, TargetSolution, Task};
use crate::par;
use crate::prompt::{bindings, render_prompt, PromptError, PromptText, TemplateId};

#[derive(Debug, thiserror::Error)]
pub enum TransferError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("no code found in response for task {0}")]
    NoCodeFound(String),
    #[error("bridge belongs to task {bridge_task}, not {task}")]
    TaskMismatch { task: String, bridge_task: String },
    #[error("transfer target {0} is not a low-resource language")]
    NotLowResource(LanguageId),
}

const REFUSALS: &[&str] = &[
    "i'm sorry",
    "i am sorry",
    "sorry, ",
    "i cannot",
    "i can't",
    "i can not",
    "i'm unable",
    "i am unable",
    "i apologize",
    "as an ai",
    "unfortunately, i",
];

/// True when the response opens with a refusal phrase.
pub fn is_refusal(raw: &str) -> bool {
    let head: String = raw.trim_start().chars().take(40).collect::<String>().to_lowercase().replace('’', "'");
    REFUSALS.iter().any(|p| head.starts_with(p))
}

/// The bridge as it is interpolated into the guided-transfer prompt: a fenced
/// block labelled with the bridge language, on its own lines.
pub fn serialize_bridge(bridge: &CodeBridge) -> String {
    let longest_run = bridge
        .code
        .split(|c| c != '`')
        .map(str::len)
        .max()
        .unwrap_or(0);
    let fence = "`".repeat(longest_run.max(2) + 1);
    format!("\n{fence}{}\n{}\n{fence}", bridge.language.name.as_str(), bridge.code)
}

/// The guided-transfer prompt: the task followed by the serialized bridge.
pub fn transfer_prompt(task: &Task, bridge: &CodeBridge, lrpl: &LanguageId) -> Result<PromptText, PromptError> {
    render_prompt(
        TemplateId::GuidedTransfer,
        &bindings([
            ("programming_language", lrpl.display_name()),
            ("task", &task.instruction),
            ("bridge_language", bridge.language.display_name()),
            ("code_bridge", &serialize_bridge(bridge)),
        ]),
    )
}

/// The direct-generation prompt: the task alone.
pub fn direct_prompt(task: &Task, lrpl: &LanguageId) -> Result<PromptText, PromptError> {
    render_prompt(
        TemplateId::DirectGeneration,
        &bindings([("programming_language", lrpl.display_name()), ("task", &task.instruction)]),
    )
}

pub struct Transferer<'a> {
    gateway: &'a Gateway,
    settings: ModelSettings,
}

impl<'a> Transferer<'a> {
    pub fn new(gateway: &'a Gateway, settings: ModelSettings) -> Self {
        Self { gateway, settings }
    }

    fn generate(&self, task: &Task, lrpl: &LanguageId, request: &ChatRequest) -> Result<(String, String), TransferError> {
        for attempt in 0..2 {
            let raw = self.gateway.complete(request)?.text;
            if is_refusal(&raw) {
                tracing::debug!(task = %task.id, attempt, "refusal");
                continue;
            }
            if let Some(code) = select_code(&extract_code_blocks(&raw), &lrpl.name) {
                return Ok((code, raw));
            }
        }
        Err(TransferError::NoCodeFound(task.id.clone()))
    }

    pub fn transfer(&self, task: &Task, bridge: &CodeBridge, lrpl: &LanguageId) -> Result<TargetSolution, TransferError> {
        if lrpl.role != Role::Lrpl {
            return Err(TransferError::NotLowResource(lrpl.clone()));
        }
        if bridge.task_id != task.id {
            return Err(TransferError::TaskMismatch { task: task.id.clone(), bridge_task: bridge.task_id.clone() });
        }
        let prompt = transfer_prompt(task, bridge, lrpl)?;
        let (code, raw_response) = self.generate(task, lrpl, &self.settings.request(&prompt))?;
        Ok(TargetSolution {
            task_id: task.id.clone(),
            language: lrpl.clone(),
            code,
            bridge_id: Some(bridge.id.clone()),
            raw_response,
        })
    }

    pub fn direct_generate(&self, task: &Task, lrpl: &LanguageId) -> Result<TargetSolution, TransferError> {
        if lrpl.role != Role::Lrpl {
            return Err(TransferError::NotLowResource(lrpl.clone()));
        }
        let prompt = direct_prompt(task, lrpl)?;
        let (code, raw_response) = self.generate(task, lrpl, &self.settings.request(&prompt))?;
        Ok(TargetSolution {
            task_id: task.id.clone(),
            language: lrpl.clone(),
            code,
            bridge_id: None,
            raw_response,
        })
    }

    /// Guided transfer for every (task, bridge) pair, in input order.
    pub fn transfer_all(
        &self,
        pairs: &[(Task, CodeBridge)],
        lrpl: &LanguageId,
        workers: usize,
    ) -> Result<Vec<Option<TargetSolution>>, TransferError> {
        par::try_map(pairs, workers, |(t, b)| skip_no_code(self.transfer(t, b, lrpl)))
    }

    pub fn direct_all(
        &self,
        tasks: &[Task],
        lrpl: &LanguageId,
        workers: usize,
    ) -> Result<Vec<Option<TargetSolution>>, TransferError> {
        par::try_map(tasks, workers, |t| skip_no_code(self.direct_generate(t, lrpl)))
    }
}

fn skip_no_code(r: Result<TargetSolution, TransferError>) -> Result<Option<TargetSolution>, TransferError> {
    match r {
        Ok(s) => Ok(Some(s)),
        Err(TransferError::NoCodeFound(id)) => {
            tracing::warn!(task = %id, "no target code after retry");
            Ok(None)
        }
        Err(e) => Err(e),
    }
}
