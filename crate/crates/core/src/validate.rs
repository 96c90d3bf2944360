//! Invariant checks over stored records. Violations are data, not errors.

use std::collections::{HashMap, HashSet};

use serde::Serialize;

use crate::model::{
    count_lines, CodeBridge, DatasetManifest, ExampleMode, Role, ScreeningVerdict, TargetSolution,
    Task, TrainingExample, BRIDGE_MARKER,
};
use crate::screening::{parse_verdict, UNPARSEABLE_RATIONALE};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_pass(&self) -> bool {
        self.violations.is_empty()
    }

    fn check(&mut self, ok: bool, name: &str) {
        if !ok {
            self.violations.push(name.to_string());
        }
    }
}

pub trait Validate {
    fn validate(&self) -> ValidationReport;
}

/// Checks one record's invariants.
pub fn validate_record<R: Validate>(record: &R) -> ValidationReport {
    record.validate()
}

impl Validate for Task {
    fn validate(&self) -> ValidationReport {
        let mut r = ValidationReport::default();
        r.check(!self.id.trim().is_empty(), "id empty");
        r.check(!self.instruction.trim().is_empty(), "instruction empty");
        r
    }
}

impl Validate for ScreeningVerdict {
    fn validate(&self) -> ValidationReport {
        let mut r = ValidationReport::default();
        r.check(!self.task_id.is_empty(), "task_id empty");
        match parse_verdict(&self.raw_response) {
            Ok((answerable, rationale)) => {
                r.check(answerable == self.answerable, "verdict disagrees with raw response");
                r.check(rationale == self.rationale, "rationale disagrees with raw response");
            }
            Err(_) => {
                r.check(!self.answerable, "unparseable response accepted");
                r.check(self.rationale == UNPARSEABLE_RATIONALE, "rationale disagrees with raw response");
            }
        }
        r
    }
}

impl Validate for CodeBridge {
    fn validate(&self) -> ValidationReport {
        let mut r = ValidationReport::default();
        r.check(!self.code.trim().is_empty(), "code empty");
        r.check(self.language.role == Role::Hrpl, "bridge language not HRPL");
        let (comments, code) = count_lines(&self.language.name, &self.code);
        r.check(
            comments == self.comment_line_count && code == self.code_line_count,
            "line counts mismatch",
        );
        r
    }
}

impl Validate for TargetSolution {
    fn validate(&self) -> ValidationReport {
        let mut r = ValidationReport::default();
        r.check(!self.code.trim().is_empty(), "code empty");
        r.check(self.language.role == Role::Lrpl, "solution language not LRPL");
        r
    }
}

impl Validate for TrainingExample {
    fn validate(&self) -> ValidationReport {
        let mut r = ValidationReport::default();
        r.check(!self.input.trim().is_empty(), "input empty");
        r.check(!self.output.trim().is_empty(), "output empty");
        r.check(!self.phase_tag.is_empty(), "phase tag empty");
        match self.mode {
            ExampleMode::Direct => {
                r.check(!self.input.contains(BRIDGE_MARKER), "direct mode contains bridge")
            }
            ExampleMode::Assist => {
                r.check(self.input.contains(BRIDGE_MARKER), "assist mode missing bridge")
            }
        }
        r
    }
}

impl Validate for DatasetManifest {
    /// Stage invariants are checked only for stages the manifest lists as
    /// completed, so a manifest from an aborted run still validates.
    fn validate(&self) -> ValidationReport {
        let mut r = ValidationReport::default();
        let c = &self.counts;
        let done = |stage: &str| self.completed_stages.iter().any(|s| s == stage);
        if done("screen") {
            r.check(c.screened_in + c.screened_out == c.seeded, "screening counts not conserved");
            r.check(c.bridged <= c.screened_in, "bridged exceeds screened_in");
            r.check(c.transferred <= c.screened_in, "transferred exceeds screened_in");
        }
        if done("assemble") {
            r.check(
                c.emitted_assist <= c.transferred && c.emitted_direct <= c.transferred,
                "emitted exceeds transferred",
            );
            r.check(c.emitted_bridge <= c.bridged, "emitted bridge examples exceed bridged");
        }
        r.check(!self.pipeline_config_hash.is_empty(), "config hash empty");
        r
    }
}

/// Corpus-level check: ids unique. Returns `(index, violation)` pairs.
pub fn validate_unique_ids<'a>(ids: impl IntoIterator<Item = &'a str>) -> Vec<(usize, String)> {
    let mut seen = HashSet::new();
    ids.into_iter()
        .enumerate()
        .filter(|(_, id)| !seen.insert(*id))
        .map(|(i, id)| (i, format!("duplicate id {id}")))
        .collect()
}

/// Provenance check: every referenced bridge exists and belongs to the same task.
pub fn validate_provenance(
    solutions: &[TargetSolution],
    bridges: &[CodeBridge],
) -> Vec<(usize, String)> {
    let by_id: HashMap<&str, &CodeBridge> = bridges.iter().map(|b| (b.id.as_str(), b)).collect();
    let mut out = Vec::new();
    for (i, s) in solutions.iter().enumerate() {
        if let Some(bid) = &s.bridge_id {
            match by_id.get(bid.as_str()) {
                None => out.push((i, format!("bridge {bid} missing"))),
                Some(b) if b.task_id != s.task_id => {
                    out.push((i, "bridge task mismatch".to_string()))
                }
                _ => {}
            }
        }
    }
    out
}
