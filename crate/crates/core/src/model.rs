//! Domain records shared by every pipeline stage.
//!
//! All records are plain immutable values that serialize to one JSON object
//! per line. Field order in the structs is the field order on disk, so a
//! record that was written by this crate re-serializes byte-identically.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::comments::{classify_lines, LineKind};

/// Marker line placed in front of a serialized code-bridge inside training
/// inputs. Direct-mode inputs must never contain it.
pub const BRIDGE_MARKER: &str = "you can refer to this solution in";

/// Hex SHA-256 of `parts`, joined with a NUL separator.
pub fn content_hash(parts: &[&str]) -> String {
    let mut hasher = Sha256::new();
    for (i, part) in parts.iter().enumerate() {
        if i > 0 {
            hasher.update([0u8]);
        }
        hasher.update(part.as_bytes());
    }
    hex::encode(hasher.finalize())
}

fn short_hash(parts: &[&str]) -> String {
    content_hash(parts)[..16].to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskSource {
    #[serde(rename = "seed-corpus")]
    SeedCorpus,
    #[serde(rename = "benchmark")]
    Benchmark,
}

impl TaskSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            TaskSource::SeedCorpus => "seed-corpus",
            TaskSource::Benchmark => "benchmark",
        }
    }
}

/// A natural-language coding instruction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub instruction: String,
    pub source: TaskSource,
    #[serde(default)]
    pub tags: Vec<String>,
}

impl Task {
    /// Builds a task whose id is the content address of `(instruction, source)`.
    pub fn new(instruction: impl Into<String>, source: TaskSource, tags: Vec<String>) -> Self {
        let instruction = instruction.into();
        Self {
            id: Task::content_id(&instruction, source),
            instruction,
            source,
            tags,
        }
    }

    pub fn content_id(instruction: &str, source: TaskSource) -> String {
        short_hash(&[instruction, source.as_str()])
    }
}

/// Languages the pipeline knows how to name, prompt for and lex.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LanguageName {
    Python,
    Cpp,
    Java,
    R,
    D,
    Racket,
    Bash,
    Other(String),
}

impl LanguageName {
    pub fn as_str(&self) -> &str {
        match self {
            LanguageName::Python => "python",
            LanguageName::Cpp => "cpp",
            LanguageName::Java => "java",
            LanguageName::R => "r",
            LanguageName::D => "d",
            LanguageName::Racket => "racket",
            LanguageName::Bash => "bash",
            LanguageName::Other(s) => s,
        }
    }

    /// Name as it appears inside prompts.
    pub fn display_name(&self) -> &str {
        match self {
            LanguageName::Python => "Python",
            LanguageName::Cpp => "C++",
            LanguageName::Java => "Java",
            LanguageName::R => "R",
            LanguageName::D => "D",
            LanguageName::Racket => "Racket",
            LanguageName::Bash => "Bash",
            LanguageName::Other(s) => s,
        }
    }

    /// Info-string aliases accepted on fenced code blocks.
    pub fn fence_aliases(&self) -> &[&str] {
        match self {
            LanguageName::Python => &["python", "py", "python3"],
            LanguageName::Cpp => &["cpp", "c++", "cxx", "cc"],
            LanguageName::Java => &["java"],
            LanguageName::R => &["r"],
            LanguageName::D => &["d", "dlang"],
            LanguageName::Racket => &["racket", "rkt", "scheme", "lisp"],
            LanguageName::Bash => &["bash", "sh", "shell", "zsh"],
            LanguageName::Other(_) => &[],
        }
    }

    pub fn matches_fence(&self, hint: &str) -> bool {
        let hint = hint.to_ascii_lowercase();
        match self {
            LanguageName::Other(s) => hint == s.to_ascii_lowercase(),
            _ => self.fence_aliases().contains(&hint.as_str()),
        }
    }

    /// The role a language plays by default: abundant languages bridge,
    /// scarce ones are targets.
    pub fn default_role(&self) -> Role {
        match self {
            LanguageName::Python | LanguageName::Cpp | LanguageName::Java => Role::Hrpl,
            _ => Role::Lrpl,
        }
    }
}

impl fmt::Display for LanguageName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LanguageName {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "python" | "py" => LanguageName::Python,
            "cpp" | "c++" => LanguageName::Cpp,
            "java" => LanguageName::Java,
            "r" => LanguageName::R,
            "d" => LanguageName::D,
            "racket" | "rkt" => LanguageName::Racket,
            "bash" | "sh" => LanguageName::Bash,
            _ => LanguageName::Other(s.trim().to_string()),
        })
    }
}

impl Serialize for LanguageName {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for LanguageName {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Ok(s.parse().expect("infallible"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    #[serde(rename = "HRPL")]
    Hrpl,
    #[serde(rename = "LRPL")]
    Lrpl,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LanguageId {
    pub name: LanguageName,
    pub role: Role,
}

impl LanguageId {
    pub fn hrpl(name: LanguageName) -> Self {
        Self { name, role: Role::Hrpl }
    }

    pub fn lrpl(name: LanguageName) -> Self {
        Self { name, role: Role::Lrpl }
    }

    pub fn display_name(&self) -> &str {
        self.name.display_name()
    }
}

impl fmt::Display for LanguageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreeningVerdict {
    pub task_id: String,
    pub answerable: bool,
    pub rationale: String,
    pub raw_response: String,
    pub model_id: String,
}

/// A solution in the bridge language, commented to explain its steps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeBridge {
    pub id: String,
    pub task_id: String,
    pub language: LanguageId,
    pub code: String,
    pub comment_line_count: usize,
    pub code_line_count: usize,
    pub raw_response: String,
}

impl CodeBridge {
    /// Builds a bridge, counting comment and code lines with the lexical
    /// rules of `language`.
    pub fn new(task_id: &str, language: LanguageId, code: String, raw_response: String) -> Self {
        let (comment_line_count, code_line_count) = count_lines(&language.name, &code);
        Self {
            id: short_hash(&[task_id, language.name.as_str(), &code]),
            task_id: task_id.to_string(),
            language,
            code,
            comment_line_count,
            code_line_count,
            raw_response,
        }
    }
}

/// `(comment lines, code lines)` of `code`; blank lines count as neither.
pub fn count_lines(lang: &LanguageName, code: &str) -> (usize, usize) {
    classify_lines(lang, code)
        .into_iter()
        .fold((0, 0), |(c, p), (kind, _)| match kind {
            LineKind::Comment => (c + 1, p),
            LineKind::Code => (c, p + 1),
            LineKind::Blank => (c, p),
        })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSolution {
    pub task_id: String,
    pub language: LanguageId,
    pub code: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bridge_id: Option<String>,
    pub raw_response: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExampleMode {
    Assist,
    Direct,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TrainingExample {
    pub input: String,
    pub output: String,
    pub mode: ExampleMode,
    pub task_id: String,
    pub phase_tag: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub seeded: u64,
    pub screened_in: u64,
    pub screened_out: u64,
    pub bridged: u64,
    pub transferred: u64,
    pub emitted_assist: u64,
    pub emitted_direct: u64,
    /// Instruction-to-bridge examples emitted under separate alignment.
    #[serde(default)]
    pub emitted_bridge: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub pipeline_config_hash: String,
    pub counts: StageCounts,
    pub model_ids: BTreeMap<String, String>,
    pub created_at: String,
    #[serde(default)]
    pub completed_stages: Vec<String>,
}
