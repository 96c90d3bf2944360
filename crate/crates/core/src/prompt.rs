//! Prompt templates for the generation stages.
//!
//! Each template has a fixed system part and a user part with `{name}`
//! placeholders. Substitution is single-pass: placeholder-like text inside a
//! bound value is left alone.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("template {template} requires unbound placeholder {{{placeholder}}}")]
    UnboundPlaceholder { template: TemplateId, placeholder: String },
    #[error("unknown template {0:?}")]
    UnknownTemplate(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    Screening,
    BridgeSynthesis,
    GuidedTransfer,
    DirectGeneration,
}

impl TemplateId {
    pub const ALL: [TemplateId; 4] = [
        TemplateId::Screening,
        TemplateId::BridgeSynthesis,
        TemplateId::GuidedTransfer,
        TemplateId::DirectGeneration,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TemplateId::Screening => "screening",
            TemplateId::BridgeSynthesis => "bridge_synthesis",
            TemplateId::GuidedTransfer => "guided_transfer",
            TemplateId::DirectGeneration => "direct_generation",
        }
    }

    pub fn template(&self) -> &'static PromptTemplate {
        match self {
            TemplateId::Screening => &SCREENING,
            TemplateId::BridgeSynthesis => &BRIDGE_SYNTHESIS,
            TemplateId::GuidedTransfer => &GUIDED_TRANSFER,
            TemplateId::DirectGeneration => &DIRECT_GENERATION,
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateId {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| PromptError::UnknownTemplate(s.to_string()))
    }
}

#[derive(Debug)]
pub struct PromptTemplate {
    pub template_id: TemplateId,
    pub system: &'static str,
    pub body: &'static str,
}

const SCREENING: PromptTemplate = PromptTemplate {
    template_id: TemplateId::Screening,
    system: "You are a highly knowledgeable assistant with expertise in evaluating whether a given problem can be solved using various programming languages.",
    body: "You should judge whether {programming_language} can be used to solve the problem below.\n\n\
You should always respond with either \"Yes\" or \"No\", followed by a concise explanation. Be concise and direct in your responses.\n\n\
Here is the task: {task}",
};

const BRIDGE_SYNTHESIS: PromptTemplate = PromptTemplate {
    template_id: TemplateId::BridgeSynthesis,
    system: "You are a highly knowledgeable assistant with expertise in generating solutions across multiple programming languages, providing detailed explanations for each step.",
    body: "Help me use {programming_language} to solve the problem below. In your response, you need to provide detailed comments to explain the key steps and the reasoning process, rather than only responding the solution.\n\n\
Here is the task: {task}",
};

const GUIDED_TRANSFER: PromptTemplate = PromptTemplate {
    template_id: TemplateId::GuidedTransfer,
    system: "You are a highly knowledgeable assistant that specializes in problem-solving across various programming languages.",
    body: "Help me use {programming_language} to solve the problem below.\n\n\
Here is the task: {task}\n\n\
To help you better solve this task, you can refer to this solution in {bridge_language}: {code_bridge}",
};

const DIRECT_GENERATION: PromptTemplate = PromptTemplate {
    template_id: TemplateId::DirectGeneration,
    system: "You are a highly knowledgeable assistant that specializes in problem-solving across various programming languages.",
    body: "Help me use {programming_language} to solve the problem below.\n\n\
Here is the task: {task}",
};

/// A rendered prompt, split into the system and user turns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptText {
    pub system: String,
    pub user: String,
}

impl PromptText {
    /// System and user parts joined by a blank line.
    pub fn full(&self) -> String {
        format!("{}\n\n{}", self.system, self.user)
    }
}

enum Piece<'a> {
    Text(&'a str),
    Placeholder(&'a str),
}

fn pieces(body: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let mut rest = body;
    while let Some(start) = rest.find('{') {
        let Some(len) = rest[start + 1..].find('}') else { break };
        let name = &rest[start + 1..start + 1 + len];
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_lowercase() || c == '_') {
            out.push(Piece::Text(&rest[..=start]));
            rest = &rest[start + 1..];
            continue;
        }
        out.push(Piece::Text(&rest[..start]));
        out.push(Piece::Placeholder(name));
        rest = &rest[start + len + 2..];
    }
    out.push(Piece::Text(rest));
    out
}

impl PromptTemplate {
    /// Placeholders the template requires, in order of first appearance.
    pub fn placeholders(&self) -> Vec<&'static str> {
        let mut names = Vec::new();
        for p in pieces(self.body) {
            if let Piece::Placeholder(n) = p {
                if !names.contains(&n) {
                    names.push(n);
                }
            }
        }
        names
    }

    pub fn render(&self, bindings: &BTreeMap<String, String>) -> Result<PromptText, PromptError> {
        let mut user = String::with_capacity(self.body.len());
        for p in pieces(self.body) {
            match p {
                Piece::Text(t) => user.push_str(t),
                Piece::Placeholder(name) => match bindings.get(name) {
                    Some(v) => user.push_str(v),
                    None => {
                        return Err(PromptError::UnboundPlaceholder {
                            template: self.template_id,
                            placeholder: name.to_string(),
                        })
                    }
                },
            }
        }
        Ok(PromptText { system: self.system.to_string(), user })
    }
}

pub fn render_prompt(
    template_id: TemplateId,
    bindings: &BTreeMap<String, String>,
) -> Result<PromptText, PromptError> {
    template_id.template().render(bindings)
}

/// Convenience for building a bindings map from pairs.
pub fn bindings<const N: usize>(pairs: [(&str, &str); N]) -> BTreeMap<String, String> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}
