//! Mock fixture tables built from canned per-task responses.
//!
//! The mock gateway is keyed by the hash of the user prompt, so fixtures
//! must be keyed by exactly the prompts the stages will render. The
//! transfer prompt embeds the bridge, which is obtained by running the real
//! synthesizer against the partially built table.

use serde::{Deserialize, Serialize};

use crate::bridge::{synthesis_prompt, Synthesizer};
use crate::gateway::{Gateway, MockFixtures, ModelSettings};
use crate::model::{LanguageId, Task, TaskSource};
use crate::prompt::PromptError;
use crate::screening::screening_prompt;
use crate::transfer::{direct_prompt, transfer_prompt};

/// One response, or responses served in order with the last repeating.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Canned {
    One(String),
    Many(Vec<String>),
}

/// Canned responses for one task. Stages without a response are absent
/// from the table, so the pipeline fails if it reaches them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedTask {
    pub instruction: String,
    #[serde(default)]
    pub tags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub screening: Option<Canned>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bridge: Option<Canned>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transfer: Option<Canned>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direct: Option<Canned>,
}

impl ScriptedTask {
    pub fn task(&self) -> Task {
        Task::new(self.instruction.clone(), TaskSource::SeedCorpus, self.tags.clone())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScriptError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("task {0}: canned bridge response yields no code")]
    NoBridge(String),
}

fn put(fixtures: &mut MockFixtures, user_prompt: &str, canned: &Canned) {
    match canned {
        Canned::One(text) => fixtures.insert(user_prompt, text.clone()),
        Canned::Many(texts) => fixtures.insert_sequence(user_prompt, texts.clone()),
    }
}

/// Builds the fixture table for a run over `script` with the given languages.
pub fn build_fixtures(script: &[ScriptedTask], target: &LanguageId, hrpl: &LanguageId) -> Result<MockFixtures, ScriptError> {
    let mut fixtures = MockFixtures::default();
    for s in script {
        let task = s.task();
        if let Some(c) = &s.screening {
            put(&mut fixtures, &screening_prompt(&task, target)?.user, c);
        }
        if let Some(c) = &s.direct {
            put(&mut fixtures, &direct_prompt(&task, target)?.user, c);
        }
        let Some(bridge_canned) = &s.bridge else { continue };
        let mut alone = MockFixtures::default();
        put(&mut alone, &synthesis_prompt(&task, hrpl)?.user, bridge_canned);
        put(&mut fixtures, &synthesis_prompt(&task, hrpl)?.user, bridge_canned);
        if let Some(c) = &s.transfer {
            // Settings do not reach the mock, only the prompt does.
            let settings = ModelSettings { model_id: "script".into(), temperature: 0.0, max_tokens: 1, seed: None };
            let gateway = Gateway::mock(alone);
            let bridge = Synthesizer::new(&gateway, settings)
                .synthesize_bridge(&task, hrpl)
                .map_err(|_| ScriptError::NoBridge(task.id.clone()))?;
            put(&mut fixtures, &transfer_prompt(&task, &bridge, target)?.user, c);
        }
    }
    Ok(fixtures)
}
