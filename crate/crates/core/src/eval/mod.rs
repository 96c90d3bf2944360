//! Execution-based evaluation of target-language candidates.
//!
//! A candidate is a completion of the problem prompt. The program that runs
//! is `prompt + completion + "\n" + tests`, so benchmark tests are expected
//! to close whatever the prompt opened, as completion-style multi-language
//! benchmarks do.

mod passk;
mod runner;
pub mod sandbox;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::jsonl::{self, JsonlError};
use crate::model::{LanguageId, LanguageName};

pub use passk::{pass_at_k, DomainError};
pub use runner::{known_languages, runnable_languages, Runner, RunnerSpec};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no toolchain for {language} on this host; runnable: [{}]", .runnable.join(", "))]
    ToolchainMissing { language: String, runnable: Vec<String> },
    #[error(transparent)]
    Sandbox(#[from] sandbox::SandboxError),
    #[error("sandbox io: {0}")]
    Io(#[from] std::io::Error),
    #[error("candidate source is empty")]
    EmptySource,
    #[error("problem {problem} is {found}, expected {expected}")]
    LanguageMismatch { problem: String, expected: String, found: String },
    #[error("problem {problem} has {found} candidates, expected {expected}")]
    SampleCountMismatch { problem: String, expected: usize, found: usize },
    #[error("no candidates for problem {0}")]
    MissingCandidates(String),
    #[error("candidates given for unknown problem {0}")]
    UnknownProblem(String),
    #[error("invalid problem {0}: {1}")]
    InvalidProblem(String, &'static str),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkProblem {
    pub id: String,
    pub language: LanguageId,
    pub prompt: String,
    pub tests: String,
    #[serde(default)]
    pub stop_sequences: Vec<String>,
    pub timeout_s: f64,
}

impl BenchmarkProblem {
    pub fn check(&self) -> Result<(), EvalError> {
        if self.tests.trim().is_empty() {
            return Err(EvalError::InvalidProblem(self.id.clone(), "tests empty"));
        }
        if !self.timeout_s.is_finite() || self.timeout_s <= 0.0 {
            return Err(EvalError::InvalidProblem(self.id.clone(), "timeout_s must be positive and finite"));
        }
        Ok(())
    }
}

/// A line of a benchmark file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub id: String,
    pub prompt: String,
    pub tests: String,
    #[serde(default)]
    pub stop_sequences: Vec<String>,
}

/// Reads a per-language benchmark file.
pub fn load_benchmark(path: &Path, language: &LanguageName, timeout_s: f64) -> Result<Vec<BenchmarkProblem>, EvalError> {
    let records: Vec<BenchmarkRecord> = jsonl::read(path)?;
    let problems: Vec<BenchmarkProblem> = records
        .into_iter()
        .map(|r| BenchmarkProblem {
            id: r.id,
            language: LanguageId::lrpl(language.clone()),
            prompt: r.prompt,
            tests: r.tests,
            stop_sequences: r.stop_sequences,
            timeout_s,
        })
        .collect();
    for p in &problems {
        p.check()?;
    }
    Ok(problems)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    CompileError,
    RuntimeError,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub verdict: Verdict,
    pub stdout: String,
    pub stderr: String,
    pub wall_time_ms: u64,
    pub exit_code: Option<i32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    pub timeout_s: f64,
    pub max_output_bytes: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self { timeout_s: 10.0, max_output_bytes: 64 * 1024 }
    }
}

impl Limits {
    fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_s.max(0.001))
    }
}

/// Cuts `generation` at the earliest occurrence of any stop sequence.
pub fn truncate_at_stop<'a>(generation: &'a str, stop_sequences: &[String]) -> &'a str {
    let cut = stop_sequences
        .iter()
        .filter(|s| !s.is_empty())
        .filter_map(|s| generation.find(s.as_str()))
        .min()
        .unwrap_or(generation.len());
    &generation[..cut]
}

fn probe_runner(language: &LanguageName) -> Result<Runner, EvalError> {
    RunnerSpec::for_language(language)
        .and_then(|s| s.probe())
        .ok_or_else(|| EvalError::ToolchainMissing {
            language: language.to_string(),
            runnable: runnable_languages().iter().map(|l| l.to_string()).collect(),
        })
}

fn truncate_bytes(mut s: String, cap: usize) -> String {
    if s.len() > cap {
        let mut cut = cap;
        while !s.is_char_boundary(cut) {
            cut -= 1;
        }
        s.truncate(cut);
    }
    s
}

fn execute(runner: &Runner, source: &str, problem: &BenchmarkProblem, limits: &Limits) -> Result<ExecutionResult, EvalError> {
    if source.trim().is_empty() {
        return Err(EvalError::EmptySource);
    }
    let dir = tempfile::Builder::new().prefix("bridge-coder-run-").tempdir()?;
    let program = format!("{}{}\n{}", problem.prompt, source, problem.tests);
    std::fs::write(dir.path().join(runner.spec.source_file), program)?;
    let timeout = limits.timeout();
    let cap = limits.max_output_bytes;

    let mut elapsed_ms = 0;
    if let Some(argv) = runner.compile_argv() {
        let built = sandbox::run(argv, dir.path(), timeout, cap)?;
        elapsed_ms = built.wall_ms;
        let verdict = match built.exit {
            sandbox::Exit::Code(0) => None,
            sandbox::Exit::TimedOut => Some(Verdict::Timeout),
            _ => Some(Verdict::CompileError),
        };
        if let Some(verdict) = verdict {
            return Ok(ExecutionResult {
                verdict,
                stdout: truncate_bytes(built.stdout, cap),
                stderr: truncate_bytes(built.stderr, cap),
                wall_time_ms: built.wall_ms,
                exit_code: match built.exit {
                    sandbox::Exit::Code(c) => Some(c),
                    _ => None,
                },
            });
        }
    }
    let remaining = timeout.saturating_sub(Duration::from_millis(elapsed_ms)).max(Duration::from_millis(1));
    let run = sandbox::run(runner.run_argv(), dir.path(), remaining, cap)?;
    let verdict = runner.classify(&run);
    Ok(ExecutionResult {
        verdict,
        exit_code: match run.exit {
            sandbox::Exit::Code(c) => Some(c),
            _ => None,
        },
        stdout: truncate_bytes(run.stdout, cap),
        stderr: truncate_bytes(run.stderr, cap),
        wall_time_ms: elapsed_ms + run.wall_ms,
    })
}

/// Builds and runs one candidate against `problem`'s tests in a fresh
/// temporary directory.
pub fn run_program(lang: &LanguageId, source: &str, problem: &BenchmarkProblem, limits: &Limits) -> Result<ExecutionResult, EvalError> {
    if lang.name != problem.language.name {
        return Err(EvalError::LanguageMismatch {
            problem: problem.id.clone(),
            expected: lang.to_string(),
            found: problem.language.to_string(),
        });
    }
    problem.check()?;
    let runner = probe_runner(&lang.name)?;
    execute(&runner, source, problem, limits)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub k: Vec<u64>,
    pub limits: Limits,
    pub workers: usize,
    /// Free-form description of how candidates were sampled (greedy, T=0.8, ...).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decoding: Option<String>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k: vec![1, 5, 10],
            limits: Limits::default(),
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            decoding: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemReport {
    pub problem_id: String,
    pub n: u64,
    pub c: u64,
    pub pass_at_k: BTreeMap<String, f64>,
    pub results: Vec<ExecutionResult>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub problems: u64,
    pub samples: u64,
    pub pass: u64,
    pub fail: u64,
    pub compile_error: u64,
    pub runtime_error: u64,
    pub timeout: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub language: String,
    pub timeout_s: f64,
    pub max_output_bytes: usize,
    pub network_isolated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decoding: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: ReportConfig,
    pub n: u64,
    pub k: Vec<u64>,
    pub pass_at_k: BTreeMap<String, f64>,
    pub totals: Totals,
    pub problems: Vec<ProblemReport>,
}

fn key(k: u64) -> String {
    format!("pass@{k}")
}

/// Mean pass@k over problems for every `k <= n`, from per-sample pass flags.
/// All rows must have the same length `n`.
pub fn aggregate_pass_at_k(table: &[Vec<bool>], ks: &[u64]) -> Result<BTreeMap<String, f64>, DomainError> {
    let mut out = BTreeMap::new();
    let Some(n) = table.first().map(|r| r.len() as u64) else { return Ok(out) };
    for &k in ks.iter().filter(|&&k| k >= 1 && k <= n) {
        let mut sum = 0.0;
        for row in table {
            let c = row.iter().filter(|p| **p).count() as u64;
            sum += pass_at_k(row.len() as u64, c, k)?;
        }
        out.insert(key(k), sum / table.len() as f64);
    }
    Ok(out)
}

/// Runs every candidate of every problem and scores pass@k.
pub fn evaluate(
    candidates: &BTreeMap<String, Vec<String>>,
    problems: &[BenchmarkProblem],
    config: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    let language = problems
        .first()
        .map(|p| p.language.clone())
        .ok_or_else(|| EvalError::InvalidProblem(String::new(), "benchmark is empty"))?;
    for p in problems {
        p.check()?;
        if p.language.name != language.name {
            return Err(EvalError::LanguageMismatch {
                problem: p.id.clone(),
                expected: language.to_string(),
                found: p.language.to_string(),
            });
        }
    }
    for id in candidates.keys() {
        if !problems.iter().any(|p| &p.id == id) {
            return Err(EvalError::UnknownProblem(id.clone()));
        }
    }
    let mut n = None;
    for p in problems {
        let list = candidates.get(&p.id).ok_or_else(|| EvalError::MissingCandidates(p.id.clone()))?;
        let expected = *n.get_or_insert(list.len());
        if list.len() != expected || expected == 0 {
            return Err(EvalError::SampleCountMismatch { problem: p.id.clone(), expected, found: list.len() });
        }
    }
    let n = n.unwrap_or(0);
    let runner = probe_runner(&language.name)?;

    let jobs: Vec<(usize, usize)> = (0..problems.len()).flat_map(|p| (0..n).map(move |s| (p, s))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.max(1))
        .build()
        .expect("thread pool");
    let results: Vec<Result<ExecutionResult, EvalError>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(p, s)| {
                let problem = &problems[p];
                let completion = truncate_at_stop(&candidates[&problem.id][s], &problem.stop_sequences);
                if completion.trim().is_empty() {
                    // An empty completion still runs: the tests decide.
                    return execute(&runner, " ", problem, &config.limits);
                }
                execute(&runner, completion, problem, &config.limits)
            })
            .collect()
    });
    let results: Vec<ExecutionResult> = results.into_iter().collect::<Result<_, _>>()?;

    let mut totals = Totals { problems: problems.len() as u64, samples: results.len() as u64, ..Default::default() };
    for r in &results {
        match r.verdict {
            Verdict::Pass => totals.pass += 1,
            Verdict::Fail => totals.fail += 1,
            Verdict::CompileError => totals.compile_error += 1,
            Verdict::RuntimeError => totals.runtime_error += 1,
            Verdict::Timeout => totals.timeout += 1,
        }
    }

    let mut table = Vec::with_capacity(problems.len());
    let mut reports = Vec::with_capacity(problems.len());
    let mut results = results.into_iter();
    for p in problems {
        let rs: Vec<ExecutionResult> = results.by_ref().take(n).collect();
        let flags: Vec<bool> = rs.iter().map(|r| r.verdict == Verdict::Pass).collect();
        let c = flags.iter().filter(|f| **f).count() as u64;
        reports.push(ProblemReport {
            problem_id: p.id.clone(),
            n: n as u64,
            c,
            pass_at_k: aggregate_pass_at_k(std::slice::from_ref(&flags), &config.k)?,
            results: rs,
        });
        table.push(flags);
    }

    Ok(EvalReport {
        config: ReportConfig {
            language: language.to_string(),
            timeout_s: config.limits.timeout_s,
            max_output_bytes: config.limits.max_output_bytes,
            network_isolated: sandbox::network_isolation_available(),
            decoding: config.decoding.clone(),
        },
        n: n as u64,
        k: config.k.iter().copied().filter(|&k| k >= 1 && k <= n as u64).collect(),
        pass_at_k: aggregate_pass_at_k(&table, &config.k)?,
        totals,
        problems: reports,
    })
}

impl EvalReport {
    /// Plain-text summary table.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let ks: Vec<String> = self.k.iter().map(|k| key(*k)).collect();
        let _ = write!(out, "{:<24} {:>3} {:>3}", "problem", "n", "c");
        for k in &ks {
            let _ = write!(out, " {k:>9}");
        }
        out.push('\n');
        for p in &self.problems {
            let _ = write!(out, "{:<24} {:>3} {:>3}", p.problem_id, p.n, p.c);
            for k in &ks {
                let _ = write!(out, " {:>9.4}", p.pass_at_k.get(k).copied().unwrap_or(f64::NAN));
            }
            out.push('\n');
        }
        let _ = write!(out, "{:<24} {:>3} {:>3}", format!("ALL ({})", self.config.language), self.n, self.totals.pass);
        for k in &ks {
            let _ = write!(out, " {:>9.4}", self.pass_at_k.get(k).copied().unwrap_or(f64::NAN));
        }
        out.push('\n');
        let t = &self.totals;
        let _ = writeln!(
            out,
            "verdicts: pass={} fail={} compile_error={} runtime_error={} timeout={}",
            t.pass, t.fail, t.compile_error, t.runtime_error, t.timeout
        );
        out
    }
}
