use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ChatRequest, ChatResponse, FinishReason, Transport, TransportError, Usage};
use crate::model::content_hash;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
enum Fixture {
    One(String),
    /// Served in order on repeated requests; the last entry repeats.
    Sequence(Vec<String>),
}

/// Canned responses keyed by the SHA-256 of the user prompt.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MockFixtures {
    entries: BTreeMap<String, Fixture>,
}

impl MockFixtures {
    pub fn key(user_prompt: &str) -> String {
        content_hash(&[user_prompt])
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fixtures serialize")
    }

    pub fn insert(&mut self, user_prompt: &str, response: impl Into<String>) {
        self.entries.insert(Self::key(user_prompt), Fixture::One(response.into()));
    }

    pub fn insert_sequence(&mut self, user_prompt: &str, responses: Vec<String>) {
        self.entries.insert(Self::key(user_prompt), Fixture::Sequence(responses));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub struct MockTransport {
    fixtures: MockFixtures,
    served: Mutex<HashMap<String, usize>>,
}

impl MockTransport {
    pub fn new(fixtures: MockFixtures) -> Self {
        Self { fixtures, served: Mutex::new(HashMap::new()) }
    }
}

impl Transport for MockTransport {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError> {
        let key = MockFixtures::key(&request.user_prompt);
        let text = match self.fixtures.entries.get(&key) {
            None => return Err(TransportError::Fatal(format!("no mock fixture for prompt {key}"))),
            Some(Fixture::One(t)) => t.clone(),
            Some(Fixture::Sequence(seq)) => {
                let mut served = self.served.lock().unwrap_or_else(|e| e.into_inner());
                let n = served.entry(key.clone()).or_insert(0);
                let t = seq.get(*n).or(seq.last()).cloned().unwrap_or_default();
                *n += 1;
                t
            }
        };
        let words = |s: &str| s.split_whitespace().count() as u64;
        Ok(ChatResponse {
            usage: Usage {
                prompt_tokens: words(&request.system_prompt) + words(&request.user_prompt),
                completion_tokens: words(&text),
            },
            text,
            finish_reason: FinishReason::Stop,
            latency_ms: 0,
            attempts: 1,
        })
    }
}
