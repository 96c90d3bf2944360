//! Task screening: ask the model whether a task can be solved in the target
//! language, and keep only the tasks it accepts.

use std::collections::HashMap;
use std::sync::Mutex;

use crate::gateway::{Gateway, GatewayError, ModelSettings};
use crate::model::{content_hash, LanguageId, Role, ScreeningVerdict, Task};
use crate::par;
use crate::prompt::{bindings, render_prompt, PromptError, PromptText, TemplateId};

/// Rationale recorded when the model never produced a parseable verdict.
pub const UNPARSEABLE_RATIONALE: &str = "unparseable";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("response does not start with \"Yes\" or \"No\"")]
pub struct ParseFailure;

#[derive(Debug, thiserror::Error)]
pub enum ScreeningError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("screening target {0} is not a low-resource language")]
    NotLowResource(LanguageId),
}

fn is_opening_noise(c: char) -> bool {
    c.is_whitespace() || matches!(c, '*' | '_' | '`' | '#' | '>' | '"' | '\'' | '“' | '‘' | '(' | '[' | '~')
}

fn is_closing_noise(c: char) -> bool {
    matches!(c, '*' | '_' | '`' | '"' | '\'' | '”' | '’' | ')' | ']' | '~')
}

fn is_separator(c: char) -> bool {
    c.is_whitespace() || matches!(c, '.' | ',' | ':' | ';' | '!' | '-' | '—' | '–')
}

/// Reads the leading yes/no token of a screening response.
///
/// Leading markdown emphasis and punctuation are skipped and the token is
/// compared case-insensitively. The rationale is whatever follows the token
/// and one separator run, with any closing emphasis removed.
pub fn parse_verdict(raw: &str) -> Result<(bool, String), ParseFailure> {
    let start = raw.trim_start_matches(is_opening_noise);
    let word_len = start
        .char_indices()
        .find(|(_, c)| !c.is_alphabetic())
        .map_or(start.len(), |(i, _)| i);
    let answerable = match start[..word_len].to_lowercase().as_str() {
        "yes" => true,
        "no" => false,
        _ => return Err(ParseFailure),
    };
    // Emphasis may close after the separator, as in "**No.** reason".
    let rest = start[word_len..]
        .trim_start_matches(is_closing_noise)
        .trim_start_matches(is_separator)
        .trim_start_matches(['*', '_', '~'])
        .trim_start();
    Ok((answerable, rest.trim_end().to_string()))
}

/// The screening prompt asking whether `task` is solvable in `target`.
pub fn screening_prompt(task: &Task, target: &LanguageId) -> Result<PromptText, PromptError> {
    render_prompt(
        TemplateId::Screening,
        &bindings([("programming_language", target.display_name()), ("task", &task.instruction)]),
    )
}

/// Screens tasks for one target language, caching verdicts per
/// (task, language, model).
pub struct Screener<'a> {
    gateway: &'a Gateway,
    settings: ModelSettings,
    cache: Mutex<HashMap<String, ScreeningVerdict>>,
}

impl<'a> Screener<'a> {
    pub fn new(gateway: &'a Gateway, settings: ModelSettings) -> Self {
        Self { gateway, settings, cache: Mutex::new(HashMap::new()) }
    }

    pub fn screen_task(&self, task: &Task, target: &LanguageId) -> Result<ScreeningVerdict, ScreeningError> {
        if target.role != Role::Lrpl {
            return Err(ScreeningError::NotLowResource(target.clone()));
        }
        let key = content_hash(&[&task.id, &task.instruction, target.name.as_str(), &self.settings.model_id]);
        if let Some(hit) = self.cache.lock().unwrap_or_else(|e| e.into_inner()).get(&key) {
            return Ok(hit.clone());
        }

        let request = self.settings.request(&screening_prompt(task, target)?);
        let mut raw = self.gateway.complete(&request)?.text;
        let mut parsed = parse_verdict(&raw);
        if parsed.is_err() {
            tracing::debug!(task = %task.id, "unparseable screening verdict, asking again");
            raw = self.gateway.complete(&request)?.text;
            parsed = parse_verdict(&raw);
        }
        let (answerable, rationale) =
            parsed.unwrap_or_else(|_| (false, UNPARSEABLE_RATIONALE.to_string()));
        let verdict = ScreeningVerdict {
            task_id: task.id.clone(),
            answerable,
            rationale,
            raw_response: raw,
            model_id: self.settings.model_id.clone(),
        };
        self.cache
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(key, verdict.clone());
        Ok(verdict)
    }

    /// Verdicts for every task, in input order.
    pub fn screen_all(
        &self,
        tasks: &[Task],
        target: &LanguageId,
        workers: usize,
    ) -> Result<Vec<ScreeningVerdict>, ScreeningError> {
        par::try_map(tasks, workers, |t| self.screen_task(t, target))
    }
}

/// Splits `tasks` into (accepted, rejected) by their verdicts. Tasks without
/// a verdict are rejected.
pub fn partition(tasks: &[Task], verdicts: &[ScreeningVerdict]) -> (Vec<Task>, Vec<Task>) {
    let answerable: HashMap<&str, bool> =
        verdicts.iter().map(|v| (v.task_id.as_str(), v.answerable)).collect();
    tasks
        .iter()
        .cloned()
        .partition(|t| answerable.get(t.id.as_str()).copied().unwrap_or(false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::MockFixtures;
    use crate::model::{LanguageName, TaskSource};

    fn ok(raw: &str) -> (bool, String) {
        parse_verdict(raw).unwrap()
    }

    #[test]
    fn parse_rule_examples() {
        assert_eq!(ok("Yes. Racket fully supports string manipulation."), (true, "Racket fully supports string manipulation.".into()));
        assert_eq!(ok("No, Bash lacks native complex-number arithmetic."), (false, "Bash lacks native complex-number arithmetic.".into()));
        assert_eq!(ok("**Yes** — loops exist."), (true, "loops exist.".into()));
        assert_eq!(ok("no."), (false, String::new()));
        assert_eq!(parse_verdict("Possibly yes"), Err(ParseFailure));
        assert_eq!(parse_verdict("It depends on the runtime."), Err(ParseFailure));
        assert_eq!(parse_verdict("Yesterday it worked"), Err(ParseFailure));
        assert_eq!(parse_verdict(""), Err(ParseFailure));
    }

    fn settings() -> ModelSettings {
        ModelSettings { model_id: "judge".into(), temperature: 0.0, max_tokens: 256, seed: None }
    }

    fn screening_prompt(task: &Task) -> String {
        render_prompt(
            TemplateId::Screening,
            &bindings([("programming_language", "Racket"), ("task", &task.instruction)]),
        )
        .unwrap()
        .user
    }

    #[test]
    fn malformed_twice_is_rejected() {
        let task = Task::new("Reverse a string.", TaskSource::SeedCorpus, vec![]);
        let mut f = MockFixtures::default();
        f.insert("x", "unused");
        f.insert_sequence(&screening_prompt(&task), vec!["It depends on the runtime.".into(), "Maybe.".into()]);
        let gw = Gateway::mock(f);
        let v = Screener::new(&gw, settings())
            .screen_task(&task, &LanguageId::lrpl(LanguageName::Racket))
            .unwrap();
        assert!(!v.answerable);
        assert_eq!(v.rationale, UNPARSEABLE_RATIONALE);
        assert_eq!(v.raw_response, "Maybe.");
    }

    #[test]
    fn reask_recovers() {
        let task = Task::new("Reverse a string.", TaskSource::SeedCorpus, vec![]);
        let mut f = MockFixtures::default();
        f.insert_sequence(&screening_prompt(&task), vec!["Hmm.".into(), "Yes: strings are lists.".into()]);
        let gw = Gateway::mock(f);
        let v = Screener::new(&gw, settings())
            .screen_task(&task, &LanguageId::lrpl(LanguageName::Racket))
            .unwrap();
        assert!(v.answerable);
        assert_eq!(v.rationale, "strings are lists.");
        assert_eq!(v.model_id, "judge");
    }

    #[test]
    fn cached_per_language() {
        let task = Task::new("Reverse a string.", TaskSource::SeedCorpus, vec![]);
        let mut f = MockFixtures::default();
        f.insert_sequence(&screening_prompt(&task), vec!["Yes.".into(), "No.".into()]);
        let gw = Gateway::mock(f);
        let s = Screener::new(&gw, settings());
        let racket = LanguageId::lrpl(LanguageName::Racket);
        assert!(s.screen_task(&task, &racket).unwrap().answerable);
        // a second call hits the cache instead of consuming the next fixture
        assert!(s.screen_task(&task, &racket).unwrap().answerable);
    }

    #[test]
    fn high_resource_target_rejected() {
        let gw = Gateway::mock(MockFixtures::default());
        let task = Task::new("t", TaskSource::SeedCorpus, vec![]);
        let err = Screener::new(&gw, settings())
            .screen_task(&task, &LanguageId::hrpl(LanguageName::Python))
            .unwrap_err();
        assert!(matches!(err, ScreeningError::NotLowResource(_)));
    }

    #[test]
    fn partition_is_disjoint_cover() {
        let tasks: Vec<Task> = (0..4).map(|i| Task::new(format!("t{i}"), TaskSource::SeedCorpus, vec![])).collect();
        let verdicts: Vec<ScreeningVerdict> = tasks
            .iter()
            .enumerate()
            .map(|(i, t)| ScreeningVerdict {
                task_id: t.id.clone(),
                answerable: i % 2 == 0,
                rationale: String::new(),
                raw_response: String::new(),
                model_id: String::new(),
            })
            .collect();
        let (keep, drop) = partition(&tasks, &verdicts);
        assert_eq!(keep.len() + drop.len(), tasks.len());
        assert!(keep.iter().all(|t| !drop.contains(t)));
    }
}
