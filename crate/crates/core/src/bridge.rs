//! Code-bridge synthesis: a commented solution in a high-resource language
//! that later stages use as a reference.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::comments::{classify_lines, comment_text, LineKind};
use crate::extract::{extract_code_blocks, select_code};
use crate::gateway::{Gateway, GatewayError, ModelSettings};
use crate::model::{CodeBridge, LanguageId, Role, Task};
use crate::par;
use crate::prompt::{bindings, render_prompt, PromptError, PromptText, TemplateId};

#[derive(Debug, thiserror::Error)]
pub enum SynthesisError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("no code found in response for task {0}")]
    NoCodeFound(String),
    #[error("bridge language {0} is not a high-resource language")]
    NotHighResource(LanguageId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssistFormat {
    PlOnly,
    NlOnly,
    #[default]
    NlPlusPl,
}

impl AssistFormat {
    pub fn as_str(&self) -> &'static str {
        match self {
            AssistFormat::PlOnly => "pl_only",
            AssistFormat::NlOnly => "nl_only",
            AssistFormat::NlPlusPl => "nl_plus_pl",
        }
    }
}

impl fmt::Display for AssistFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AssistFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pl_only" | "pl" => Ok(AssistFormat::PlOnly),
            "nl_only" | "nl" => Ok(AssistFormat::NlOnly),
            "nl_plus_pl" | "nl+pl" => Ok(AssistFormat::NlPlusPl),
            _ => Err(format!("unknown assist format {s:?} (pl_only, nl_only, nl_plus_pl)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BridgeQuality {
    pub has_code: bool,
    pub has_comments: bool,
    pub flags: Vec<&'static str>,
}

impl BridgeQuality {
    pub fn is_clean(&self) -> bool {
        self.flags.is_empty()
    }
}

pub fn validate_bridge(bridge: &CodeBridge) -> BridgeQuality {
    let has_code = bridge.code_line_count >= 1;
    let has_comments = bridge.comment_line_count >= 1;
    let mut flags = Vec::new();
    if !has_comments {
        flags.push("NL-missing");
    }
    if !has_code {
        flags.push("PL-missing");
    }
    BridgeQuality { has_code, has_comments, flags }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("stripping bridge to {0} leaves nothing")]
pub struct EmptyResult(pub AssistFormat);

/// Renders the bridge in one of the assist formats.
///
/// `pl_only` keeps the code lines (blank lines dropped), `nl_only` keeps the
/// prose of each comment line with its markers removed, and `nl_plus_pl` is
/// the bridge code verbatim. Trailing comments on code lines stay with the code.
pub fn strip_to_format(bridge: &CodeBridge, format: AssistFormat) -> Result<String, EmptyResult> {
    let lang = &bridge.language.name;
    let out = match format {
        AssistFormat::NlPlusPl => bridge.code.clone(),
        AssistFormat::PlOnly => classify_lines(lang, &bridge.code)
            .into_iter()
            .filter(|(k, _)| *k == LineKind::Code)
            .map(|(_, l)| l)
            .collect::<Vec<_>>()
            .join("\n"),
        AssistFormat::NlOnly => classify_lines(lang, &bridge.code)
            .into_iter()
            .filter(|(k, _)| *k == LineKind::Comment)
            .map(|(_, l)| comment_text(lang, l))
            .filter(|t| !t.is_empty())
            .collect::<Vec<_>>()
            .join("\n"),
    };
    if out.trim().is_empty() {
        return Err(EmptyResult(format));
    }
    Ok(out)
}

/// The bridge-synthesis prompt for `task` in `hrpl`.
pub fn synthesis_prompt(task: &Task, hrpl: &LanguageId) -> Result<PromptText, PromptError> {
    render_prompt(
        TemplateId::BridgeSynthesis,
        &bindings([("programming_language", hrpl.display_name()), ("task", &task.instruction)]),
    )
}

pub struct Synthesizer<'a> {
    gateway: &'a Gateway,
    settings: ModelSettings,
}

impl<'a> Synthesizer<'a> {
    pub fn new(gateway: &'a Gateway, settings: ModelSettings) -> Self {
        Self { gateway, settings }
    }

    fn attempt(&self, task: &Task, hrpl: &LanguageId, request: &crate::gateway::ChatRequest) -> Result<Option<CodeBridge>, SynthesisError> {
        let raw = self.gateway.complete(request)?.text;
        let blocks = extract_code_blocks(&raw);
        Ok(select_code(&blocks, &hrpl.name).map(|code| CodeBridge::new(&task.id, hrpl.clone(), code, raw)))
    }

    /// Generates a bridge for `task`. A response without code, or a bridge
    /// lacking comments or code, triggers one regeneration; a bridge that is
    /// still flagged is returned anyway.
    pub fn synthesize_bridge(&self, task: &Task, hrpl: &LanguageId) -> Result<CodeBridge, SynthesisError> {
        if hrpl.role != Role::Hrpl {
            return Err(SynthesisError::NotHighResource(hrpl.clone()));
        }
        let request = self.settings.request(&synthesis_prompt(task, hrpl)?);
        let first = match self.attempt(task, hrpl, &request)? {
            Some(b) if validate_bridge(&b).is_clean() => return Ok(b),
            first => first,
        };
        tracing::debug!(task = %task.id, "regenerating bridge");
        let second = self.attempt(task, hrpl, &request)?;
        match (first, second) {
            (_, Some(b)) if validate_bridge(&b).is_clean() => Ok(b),
            (Some(b), _) => Ok(b),
            (None, Some(b)) => Ok(b),
            (None, None) => Err(SynthesisError::NoCodeFound(task.id.clone())),
        }
    }

    /// One result per task, in input order. Per-task `NoCodeFound` is
    /// returned as data; gateway failures abort.
    pub fn synthesize_all(
        &self,
        tasks: &[Task],
        hrpl: &LanguageId,
        workers: usize,
    ) -> Result<Vec<Option<CodeBridge>>, SynthesisError> {
        par::try_map(tasks, workers, |t| match self.synthesize_bridge(t, hrpl) {
            Ok(b) => Ok(Some(b)),
            Err(SynthesisError::NoCodeFound(id)) => {
                tracing::warn!(task = %id, "no bridge code after retry");
                Ok(None)
            }
            Err(e) => Err(e),
        })
    }
}
