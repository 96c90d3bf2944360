//! Declarative pipeline configuration.
//!
//! One TOML file describes a run. Relative paths resolve against the file's
//! directory. Secrets never live in the file: the API key is read from the
//! environment variable named by `provider.api_key_env`, and
//! `BRIDGE_CODER_BASE_URL` overrides `provider.base_url`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::bridge::AssistFormat;
use crate::dataset::{build_schedule, AlignmentMode};
use crate::gateway::{Gateway, LimiterConfig, MockFixtures, ModelSettings, OpenAiTransport, RetryPolicy};
use crate::model::{content_hash, LanguageId, LanguageName, Role};

pub const BASE_URL_ENV: &str = "BRIDGE_CODER_BASE_URL";
pub const DEFAULT_MODEL: &str = "meta-llama/Meta-Llama-3-70B-Instruct";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// How target solutions are generated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransferMode {
    /// Guided by the code-bridge.
    #[default]
    Bridge,
    /// From the instruction alone.
    Direct,
}

impl TransferMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            TransferMode::Bridge => "bridge",
            TransferMode::Direct => "direct",
        }
    }
}

impl fmt::Display for TransferMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TransferMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bridge" => Ok(TransferMode::Bridge),
            "direct" => Ok(TransferMode::Direct),
            other => Err(format!("unknown transfer mode {other:?} (expected bridge or direct)")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    Mock,
    /// Any OpenAI-compatible chat-completions endpoint.
    OpenAi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub base_url: String,
    pub api_key_env: String,
    /// Mock fixture map; required when `kind = "mock"`.
    pub fixtures: Option<PathBuf>,
    pub timeout_s: f64,
    pub retry: RetryPolicy,
    pub limits: LimiterConfig,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Mock,
            base_url: "https://api.openai.com/v1".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            fixtures: None,
            timeout_s: 120.0,
            retry: RetryPolicy::default(),
            limits: LimiterConfig::default(),
        }
    }
}

/// Per-stage overrides of the shared model settings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageModel {
    pub model_id: Option<String>,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelsConfig {
    /// Used by every stage unless the stage overrides it.
    pub model_id: String,
    pub seed: Option<u64>,
    pub screening: StageModel,
    pub synthesis: StageModel,
    pub transfer: StageModel,
}

impl Default for ModelsConfig {
    fn default() -> Self {
        Self {
            model_id: DEFAULT_MODEL.into(),
            seed: None,
            screening: StageModel::default(),
            synthesis: StageModel::default(),
            transfer: StageModel::default(),
        }
    }
}

impl ModelsConfig {
    fn resolve(&self, stage: &StageModel, temperature: f64, max_tokens: u32) -> ModelSettings {
        ModelSettings {
            model_id: stage.model_id.clone().unwrap_or_else(|| self.model_id.clone()),
            temperature: stage.temperature.unwrap_or(temperature),
            max_tokens: stage.max_tokens.unwrap_or(max_tokens),
            seed: stage.seed.or(self.seed),
        }
    }

    /// Classification: deterministic and short.
    pub fn screening(&self) -> ModelSettings {
        self.resolve(&self.screening, 0.0, 256)
    }

    pub fn synthesis(&self) -> ModelSettings {
        self.resolve(&self.synthesis, 0.7, 2048)
    }

    pub fn transfer(&self) -> ModelSettings {
        self.resolve(&self.transfer, 0.7, 2048)
    }
}

fn default_epochs() -> BTreeMap<String, f64> {
    BTreeMap::from([("assist".to_string(), 1.0), ("direct".to_string(), 1.0)])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seed task corpus, one task per line.
    pub tasks: PathBuf,
    #[serde(default = "PipelineConfig::default_out_dir")]
    pub out_dir: PathBuf,
    pub target_language: LanguageName,
    #[serde(default = "PipelineConfig::default_bridge_language")]
    pub bridge_language: LanguageName,
    #[serde(default = "yes")]
    pub screening: bool,
    #[serde(default)]
    pub transfer_mode: TransferMode,
    #[serde(default)]
    pub alignment: AlignmentMode,
    #[serde(default)]
    pub assist_format: AssistFormat,
    /// Bridged alignment: split records between phases instead of reusing them.
    #[serde(default)]
    pub partition: bool,
    #[serde(default = "yes")]
    pub dedup: bool,
    /// Keep records whose bridge lacks comments or code.
    #[serde(default)]
    pub keep_flagged: bool,
    /// Orders emitted examples.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "PipelineConfig::default_workers")]
    pub workers: usize,
    #[serde(default = "default_epochs")]
    pub epochs: BTreeMap<String, f64>,
    #[serde(default)]
    pub provider: ProviderConfig,
    #[serde(default)]
    pub models: ModelsConfig,
}

fn yes() -> bool {
    true
}

impl PipelineConfig {
    fn default_out_dir() -> PathBuf {
        PathBuf::from("out")
    }

    fn default_bridge_language() -> LanguageName {
        LanguageName::Python
    }

    fn default_workers() -> usize {
        8
    }

    /// A config with every default, for the given corpus and target.
    pub fn new(tasks: impl Into<PathBuf>, target_language: LanguageName) -> Self {
        Self {
            tasks: tasks.into(),
            out_dir: Self::default_out_dir(),
            target_language,
            bridge_language: Self::default_bridge_language(),
            screening: true,
            transfer_mode: TransferMode::default(),
            alignment: AlignmentMode::default(),
            assist_format: AssistFormat::default(),
            partition: false,
            dedup: true,
            keep_flagged: false,
            seed: 0,
            workers: Self::default_workers(),
            epochs: default_epochs(),
            provider: ProviderConfig::default(),
            models: ModelsConfig::default(),
        }
    }

    pub fn from_toml(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Parse { path: origin.to_path_buf(), source })
    }

    /// Reads `path`, resolves relative paths and applies environment overrides.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let mut config = Self::from_toml(&text, path)?;
        config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        config.apply_env(|k| std::env::var(k).ok());
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.tasks);
        join(&mut self.out_dir);
        if let Some(f) = self.provider.fixtures.as_mut() {
            join(f);
        }
    }

    pub fn apply_env(&mut self, env: impl Fn(&str) -> Option<String>) {
        if let Some(url) = env(BASE_URL_ENV).filter(|u| !u.is_empty()) {
            self.provider.base_url = url;
        }
    }

    pub fn target(&self) -> LanguageId {
        LanguageId::lrpl(self.target_language.clone())
    }

    pub fn bridge(&self) -> LanguageId {
        LanguageId::hrpl(self.bridge_language.clone())
    }

    /// Whether the run needs code-bridges at all.
    pub fn needs_bridges(&self) -> bool {
        self.transfer_mode == TransferMode::Bridge || self.alignment.needs_bridge()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.target_language.default_role() != Role::Lrpl {
            return invalid(format!("target_language {} is not a low-resource language", self.target_language));
        }
        if self.bridge_language.default_role() != Role::Hrpl {
            return invalid(format!("bridge_language {} is not a high-resource language", self.bridge_language));
        }
        if self.workers == 0 {
            return invalid("workers must be at least 1".into());
        }
        for (stage, m) in [
            ("screening", self.models.screening()),
            ("synthesis", self.models.synthesis()),
            ("transfer", self.models.transfer()),
        ] {
            if m.model_id.trim().is_empty() {
                return invalid(format!("models.{stage}: model_id empty"));
            }
            if !(0.0..=2.0).contains(&m.temperature) {
                return invalid(format!("models.{stage}: temperature {} outside [0, 2]", m.temperature));
            }
            if m.max_tokens == 0 {
                return invalid(format!("models.{stage}: max_tokens must be positive"));
            }
        }
        if let Some(bad) = self.epochs.keys().find(|k| !matches!(k.as_str(), "assist" | "direct" | "separate")) {
            return invalid(format!("epochs: unknown phase {bad:?}"));
        }
        build_schedule(self.alignment, &self.epochs).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.provider.kind == ProviderKind::Mock && self.provider.fixtures.is_none() {
            return invalid("provider.fixtures is required for the mock provider".into());
        }
        if !self.provider.timeout_s.is_finite() || self.provider.timeout_s <= 0.0 {
            return invalid("provider.timeout_s must be positive and finite".into());
        }
        if self.provider.limits.max_concurrency == 0 {
            return invalid("provider.limits.max_concurrency must be at least 1".into());
        }
        Ok(())
    }

    /// Hash of everything that influences stage outputs: the config minus
    /// paths and throughput knobs, plus the contents of the corpus and of
    /// the mock fixtures.
    pub fn config_hash(&self) -> Result<String, ConfigError> {
        let read = |p: &Path| std::fs::read(p).map_err(|source| ConfigError::Io { path: p.to_path_buf(), source });
        let tasks = content_hash(&[&String::from_utf8_lossy(&read(&self.tasks)?)]);
        let fixtures = match (&self.provider.kind, &self.provider.fixtures) {
            (ProviderKind::Mock, Some(p)) => content_hash(&[&String::from_utf8_lossy(&read(p)?)]),
            _ => String::new(),
        };
        let mut view = self.clone();
        view.tasks = PathBuf::new();
        view.out_dir = PathBuf::new();
        view.workers = 0;
        view.provider.fixtures = None;
        view.provider.timeout_s = 0.0;
        view.provider.retry = RetryPolicy::default();
        view.provider.limits = LimiterConfig::default();
        let json = serde_json::to_string(&view).expect("config serializes");
        Ok(content_hash(&[&json, &tasks, &fixtures]))
    }

    pub fn build_gateway(&self) -> Result<Gateway, ConfigError> {
        match self.provider.kind {
            ProviderKind::Mock => {
                let path = self
                    .provider
                    .fixtures
                    .as_ref()
                    .ok_or_else(|| ConfigError::Invalid("provider.fixtures is required for the mock provider".into()))?;
                let fixtures = MockFixtures::load(path).map_err(|source| ConfigError::Io { path: path.clone(), source })?;
                Ok(Gateway::mock(fixtures))
            }
            ProviderKind::OpenAi => {
                let key = std::env::var(&self.provider.api_key_env).ok().filter(|k| !k.is_empty());
                if key.is_none() {
                    tracing::warn!(var = %self.provider.api_key_env, "no API key in environment; sending unauthenticated requests");
                }
                let transport = OpenAiTransport::new(&self.provider.base_url, key, Duration::from_secs_f64(self.provider.timeout_s));
                Ok(Gateway::new(Arc::new(transport), self.provider.retry.clone(), self.provider.limits.clone()))
            }
        }
    }
}
