//! Chat-completion gateway: request validation, admission control and
//! bounded retry over a pluggable transport.

mod limiter;
mod mock;
mod openai;

use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use limiter::{Limiter, LimiterConfig};
pub use mock::{MockFixtures, MockTransport};
pub use openai::OpenAiTransport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub system_prompt: String,
    pub user_prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ChatRequest {
    pub fn check(&self) -> Result<(), GatewayError> {
        if self.system_prompt.trim().is_empty() || self.user_prompt.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("prompts must be non-empty".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub finish_reason: FinishReason,
    pub usage: Usage,
    pub latency_ms: u64,
    /// Transport attempts it took to obtain this response.
    pub attempts: u32,
}

/// What a transport reports when a single attempt fails.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    /// Worth retrying: connection failures, 429, 5xx.
    #[error("transient: {0}")]
    Transient(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    /// Will fail again if retried.
    #[error("{0}")]
    Fatal(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("provider error after {attempts} attempt(s): {message}")]
    Provider { attempts: u32, message: String },
}

/// Per-stage model choice and decoding parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSettings {
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ModelSettings {
    pub fn request(&self, prompt: &crate::prompt::PromptText) -> ChatRequest {
        ChatRequest {
            model_id: self.model_id.clone(),
            system_prompt: prompt.system.clone(),
            user_prompt: prompt.user.clone(),
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            seed: self.seed,
        }
    }
}

/// A single-shot chat completion backend.
pub trait Transport: Send + Sync {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub attempts: u32,
    /// Sleep before retry `i` is `backoff_ms[min(i, len - 1)]`.
    pub backoff_ms: Vec<u64>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { attempts: 3, backoff_ms: vec![1000, 4000] }
    }
}

impl RetryPolicy {
    pub fn delay(&self, retry: usize) -> Duration {
        let ms = self
            .backoff_ms
            .get(retry)
            .or(self.backoff_ms.last())
            .copied()
            .unwrap_or(0);
        Duration::from_millis(ms)
    }
}

/// Shareable gateway; clones share the transport and the limiter.
#[derive(Clone)]
pub struct Gateway {
    transport: Arc<dyn Transport>,
    retry: RetryPolicy,
    limiter: Arc<Limiter>,
}

impl Gateway {
    pub fn new(transport: Arc<dyn Transport>, retry: RetryPolicy, limiter: LimiterConfig) -> Self {
        Self { transport, retry, limiter: Arc::new(Limiter::new(limiter)) }
    }

    /// Mock gateway with no rate limiting and no backoff.
    pub fn mock(fixtures: MockFixtures) -> Self {
        Self::new(
            Arc::new(MockTransport::new(fixtures)),
            RetryPolicy { attempts: 1, backoff_ms: vec![] },
            LimiterConfig::unlimited(),
        )
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        request.check()?;
        let started = Instant::now();
        let attempts = self.retry.attempts.max(1);
        let mut last = String::new();
        for attempt in 1..=attempts {
            let outcome = {
                let _permit = self.limiter.acquire();
                self.transport.send(request)
            };
            match outcome {
                Ok(mut resp) => {
                    resp.latency_ms = started.elapsed().as_millis() as u64;
                    resp.attempts = attempt;
                    return Ok(resp);
                }
                Err(TransportError::Auth(msg)) => return Err(GatewayError::Auth(msg)),
                Err(TransportError::Fatal(msg)) => {
                    return Err(GatewayError::Provider { attempts: attempt, message: msg })
                }
                Err(TransportError::Transient(msg)) => {
                    tracing::warn!(attempt, model = %request.model_id, "transient provider failure: {msg}");
                    last = msg;
                    if attempt < attempts {
                        std::thread::sleep(self.retry.delay(attempt as usize - 1));
                    }
                }
            }
        }
        Err(GatewayError::Provider { attempts, message: last })
    }
}
