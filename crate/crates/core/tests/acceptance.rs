//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Runs without any training component.

mod common;

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use bridge_coder_core::bridge::validate_bridge;
use bridge_coder_core::dataset::{assemble, AlignmentMode, AssembleOptions, Record};
use bridge_coder_core::eval::{self, aggregate_pass_at_k, pass_at_k, run_program, runnable_languages, EvalConfig, Limits, Verdict};
use bridge_coder_core::gateway::{Gateway, MockFixtures, ModelSettings};
use bridge_coder_core::jsonl;
use bridge_coder_core::model::{CodeBridge, LanguageId, LanguageName, ScreeningVerdict, TargetSolution, Task, TaskSource, BRIDGE_MARKER};
use bridge_coder_core::pipeline::{run_pipeline, RunOptions};
use bridge_coder_core::prompt::{bindings, render_prompt, TemplateId};
use bridge_coder_core::screening::{parse_verdict, Screener, UNPARSEABLE_RATIONALE};
use bridge_coder_core::transfer::transfer_prompt;

type Outcome = Result<String, String>;

/// Name, check and time budget.
type Criterion = (&'static str, fn() -> Outcome, Duration);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn golden(name: &str) -> String {
    std::fs::read_to_string(common::core_tests_dir().join("golden").join(name)).expect("golden file")
}

fn prompt_fidelity() -> Outcome {
    let sum = "Return the sum of a list of integers.";
    let bridge_code = "def total(xs):\n    # add every element\n    return sum(xs)";
    let cases = [
        (
            "screening_racket.txt",
            render_prompt(TemplateId::Screening, &bindings([("programming_language", "Racket"), ("task", "Reverse a string.")])),
            "respond with either \"Yes\" or \"No\"",
        ),
        (
            "bridge_synthesis_python.txt",
            render_prompt(TemplateId::BridgeSynthesis, &bindings([("programming_language", "Python"), ("task", sum)])),
            "detailed comments to explain the key steps",
        ),
        (
            "guided_transfer_racket.txt",
            render_prompt(
                TemplateId::GuidedTransfer,
                &bindings([
                    ("programming_language", "Racket"),
                    ("task", sum),
                    ("bridge_language", "Python"),
                    ("code_bridge", bridge_code),
                ]),
            ),
            "you can refer to this solution",
        ),
    ];
    for (file, rendered, anchor) in cases {
        let rendered = rendered.map_err(|e| format!("{file}: {e}"))?.full();
        let expected = golden(file);
        ensure(expected.contains(anchor), || format!("{file}: golden lacks anchor {anchor:?}"))?;
        ensure(rendered == expected, || format!("{file}: rendered prompt differs from golden"))?;
    }
    let task = Task::new(sum, TaskSource::SeedCorpus, vec![]);
    let bridge = CodeBridge::new(&task.id, LanguageId::hrpl(LanguageName::Python), bridge_code.into(), String::new());
    let fenced = transfer_prompt(&task, &bridge, &LanguageId::lrpl(LanguageName::Racket))
        .map_err(|e| e.to_string())?
        .full();
    ensure(fenced == golden("guided_transfer_fenced_bridge.txt"), || "serialized-bridge transfer prompt differs from golden".into())?;
    Ok("3 templates + serialized bridge byte-identical".into())
}

#[derive(serde::Deserialize)]
struct VerdictCase {
    raw: String,
    expected: String,
    rationale: Option<String>,
}

fn verdict_parser() -> Outcome {
    let cases: Vec<VerdictCase> = jsonl::read(&common::core_tests_dir().join("fixtures/verdicts.jsonl")).map_err(|e| e.to_string())?;
    ensure(cases.len() >= 30, || format!("only {} cases", cases.len()))?;
    let target = LanguageId::lrpl(LanguageName::Racket);
    let mut fixtures = MockFixtures::default();
    let tasks: Vec<Task> = (0..cases.len())
        .map(|i| Task::new(format!("verdict case {i}"), TaskSource::SeedCorpus, vec![]))
        .collect();
    for (task, case) in tasks.iter().zip(&cases) {
        let prompt = bridge_coder_core::screening::screening_prompt(task, &target).map_err(|e| e.to_string())?;
        fixtures.insert(&prompt.user, case.raw.clone());
    }
    let gateway = Gateway::mock(fixtures);
    let settings = ModelSettings { model_id: "m".into(), temperature: 0.0, max_tokens: 16, seed: None };
    let screener = Screener::new(&gateway, settings);

    let mut agree = 0;
    let mut disagreements = Vec::new();
    for (i, (task, case)) in tasks.iter().zip(&cases).enumerate() {
        let parsed = parse_verdict(&case.raw);
        let verdict: ScreeningVerdict = screener.screen_task(task, &target).map_err(|e| e.to_string())?;
        let ok = match case.expected.as_str() {
            "yes" | "no" => {
                let want = case.expected == "yes";
                let rationale = case.rationale.clone().unwrap_or_default();
                parsed.as_ref().is_ok_and(|(a, r)| *a == want && *r == rationale)
                    && verdict.answerable == want
                    && verdict.rationale == rationale
            }
            _ => parsed.is_err() && !verdict.answerable && verdict.rationale == UNPARSEABLE_RATIONALE,
        };
        if ok {
            agree += 1;
        } else {
            disagreements.push(format!("case {i} {:?}", case.raw));
        }
    }
    ensure(disagreements.is_empty(), || disagreements.join("; "))?;
    Ok(format!("{agree}/{} cases agree", cases.len()))
}

/// pass@k by counting the k-subsets of n samples that contain at least one
/// of the c passing samples (samples 0..c).
fn enumeration_table(n: u32) -> BTreeMap<(u32, u32), (u64, u64)> {
    let mut table = BTreeMap::new();
    for mask in 0u32..(1 << n) {
        let k = mask.count_ones();
        if k == 0 {
            continue;
        }
        for c in 0..=n {
            let entry = table.entry((c, k)).or_insert((0u64, 0u64));
            entry.1 += 1;
            if mask & ((1u32 << c) - 1) != 0 {
                entry.0 += 1;
            }
        }
    }
    table
}

fn pass_at_k_oracle() -> Outcome {
    let mut checked = 0;
    let mut worst = 0.0f64;
    for n in 1..=12u32 {
        for ((c, k), (hits, total)) in enumeration_table(n) {
            let exact = hits as f64 / total as f64;
            let got = pass_at_k(n as u64, c as u64, k as u64).map_err(|e| e.to_string())?;
            let err = (got - exact).abs();
            worst = worst.max(err);
            ensure(err <= 1e-12, || format!("n={n} c={c} k={k}: {got} vs {exact}"))?;
            checked += 1;
        }
    }
    let mut rng = StdRng::seed_from_u64(0);
    for t in 0..1000 {
        let problems = rng.random_range(1..=20);
        let n = rng.random_range(10..=30);
        let table: Vec<Vec<bool>> = (0..problems)
            .map(|_| {
                let p: f64 = rng.random();
                (0..n).map(|_| rng.random_bool(p)).collect()
            })
            .collect();
        let agg = aggregate_pass_at_k(&table, &[1, 5, 10]).map_err(|e| e.to_string())?;
        let (p1, p5, p10) = (agg["pass@1"], agg["pass@5"], agg["pass@10"]);
        ensure((0.0..=1.0).contains(&p1) && (0.0..=1.0).contains(&p10), || format!("table {t}: out of range"))?;
        ensure(p1 <= p5 && p5 <= p10, || format!("table {t}: {p1} {p5} {p10} not monotone"))?;
    }
    Ok(format!("{checked} (n,c,k) triples, max error {worst:.1e}; 1000 random tables monotone"))
}

fn sandbox_correctness() -> Outcome {
    let bench = common::workspace_root().join("data/bench");
    let problems = eval::load_benchmark(&bench.join("bash-toy.jsonl"), &LanguageName::Bash, 10.0).map_err(|e| e.to_string())?;
    ensure(problems.len() == 5, || format!("{} toy problems", problems.len()))?;
    let config = EvalConfig { k: vec![1], ..EvalConfig::default() };
    let mut scores = Vec::new();
    for (file, want) in [("bash-toy.correct.jsonl", 1.0), ("bash-toy.broken.jsonl", 0.0)] {
        #[derive(serde::Deserialize)]
        struct Line {
            problem_id: String,
            completion: String,
        }
        let lines: Vec<Line> = jsonl::read(&bench.join(file)).map_err(|e| e.to_string())?;
        let mut candidates: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for l in lines {
            candidates.entry(l.problem_id).or_default().push(l.completion);
        }
        let report = eval::evaluate(&candidates, &problems, &config).map_err(|e| e.to_string())?;
        let got = report.pass_at_k["pass@1"];
        ensure(got == want, || format!("{file}: pass@1 = {got}, expected {want}"))?;
        scores.push(format!("{}={got}", file.trim_start_matches("bash-toy.").trim_end_matches(".jsonl")));
    }

    let timeout = 2.0;
    let limits = Limits { timeout_s: timeout, ..Limits::default() };
    let mut looping = problems[0].clone();
    looping.timeout_s = timeout;
    let started = Instant::now();
    let r = run_program(&looping.language, "    while :; do :; done", &looping, &limits).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    ensure(r.verdict == Verdict::Timeout, || format!("infinite loop verdict {:?}", r.verdict))?;
    ensure(r.wall_time_ms >= 2000, || format!("timed out after only {} ms", r.wall_time_ms))?;
    ensure(elapsed <= Duration::from_secs_f64(timeout + 1.0), || format!("killed after {elapsed:?}"))?;

    let racket = if runnable_languages().contains(&LanguageName::Racket) {
        "racket present but no toy racket suite".to_string()
    } else {
        "racket not installed".to_string()
    };
    Ok(format!("bash {}; loop killed after {} ms; {racket}", scores.join(" "), elapsed.as_millis()))
}

fn dataset_laws() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let script = common::sample_script();
    ensure(script.len() == 20, || format!("{} scripted tasks", script.len()))?;
    let config = common::mock_config(dir.path(), &script);
    let outcome = run_pipeline(&config, &RunOptions::default()).map_err(|e| e.to_string())?;
    let m = &outcome.manifest;
    ensure(m.counts.seeded == 20, || format!("seeded {}", m.counts.seeded))?;
    ensure(m.counts.screened_in + m.counts.screened_out == m.counts.seeded, || "screening counts not conserved".into())?;
    ensure(m.counts.screened_out > 0, || "screening rejected nothing".into())?;

    let out = &config.out_dir;
    let tasks: Vec<Task> = jsonl::read(&out.join("tasks.jsonl")).map_err(|e| e.to_string())?;
    let bridges: Vec<CodeBridge> = jsonl::read(&out.join("bridges.jsonl")).map_err(|e| e.to_string())?;
    let solutions: Vec<TargetSolution> = jsonl::read(&out.join("solutions.jsonl")).map_err(|e| e.to_string())?;
    let records: Vec<Record> = solutions
        .iter()
        .map(|s| Record {
            task: tasks.iter().find(|t| t.id == s.task_id).cloned().expect("task"),
            bridge: bridges.iter().find(|b| Some(&b.id) == s.bridge_id.as_ref()).cloned(),
            solution: s.clone(),
        })
        .filter(|r| r.bridge.as_ref().is_some_and(|b| validate_bridge(b).is_clean()))
        .collect();
    ensure(!records.is_empty(), || "no records".into())?;
    let n = records.len();

    let opts = AssembleOptions { dedup: false, ..AssembleOptions::default() };
    let size = |mode| -> Result<Vec<usize>, String> {
        Ok(assemble(&records, mode, &opts).map_err(|e| e.to_string())?.iter().map(|d| d.len()).collect())
    };
    ensure(size(AlignmentMode::Direct)? == vec![n], || "direct size".into())?;
    ensure(size(AlignmentMode::Separate)? == vec![2 * n], || "separate size".into())?;
    ensure(size(AlignmentMode::Assist)? == vec![n], || "assist size".into())?;
    ensure(size(AlignmentMode::Bridged)? == vec![n, n], || "bridged sizes".into())?;

    // The emitted files from the run itself.
    let assist: Vec<bridge_coder_core::model::TrainingExample> =
        jsonl::read(&out.join("dataset-assist.jsonl")).map_err(|e| e.to_string())?;
    let direct: Vec<bridge_coder_core::model::TrainingExample> =
        jsonl::read(&out.join("dataset-direct.jsonl")).map_err(|e| e.to_string())?;
    ensure(assist.len() == direct.len() && direct.len() == n, || format!("emitted {} / {} for {n} records", assist.len(), direct.len()))?;
    for ex in &direct {
        ensure(!ex.input.contains(BRIDGE_MARKER), || format!("direct example for {} contains the bridge marker", ex.task_id))?;
        let bridge = bridges.iter().find(|b| b.task_id == ex.task_id).expect("bridge");
        ensure(!ex.input.contains(&bridge.code), || format!("direct example for {} contains bridge code", ex.task_id))?;
    }
    ensure(assist.iter().all(|ex| ex.input.contains(BRIDGE_MARKER)), || "assist example without bridge".into())?;
    Ok(format!("{n} records: direct {n}, separate {}, bridged {n}+{n}; seeded 20 = {} in + {} out", 2 * n, m.counts.screened_in, m.counts.screened_out))
}

fn determinism() -> Outcome {
    let script = common::sample_script();
    let mut runs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let config = common::mock_config(dir.path(), &script);
        let options = RunOptions { stages: None, created_at: Some(common::FIXED_TIMESTAMP.into()) };
        run_pipeline(&config, &options).map_err(|e| e.to_string())?;
        runs.push(common::stage_files(&config.out_dir));
    }
    let names: Vec<&str> = runs[0].iter().map(|(n, _)| n.as_str()).collect();
    ensure(names.len() >= 8, || format!("only {} stage files", names.len()))?;
    ensure(runs[0] == runs[1], || {
        let differing: Vec<&str> = runs[0]
            .iter()
            .zip(&runs[1])
            .filter(|(a, b)| a != b)
            .map(|(a, _)| a.0.as_str())
            .collect();
        format!("files differ: {differing:?}")
    })?;
    Ok(format!("{} files byte-identical: {}", names.len(), names.join(" ")))
}

fn standalone(results: &[bool]) -> Outcome {
    let crates: Vec<String> = std::fs::read_dir(common::workspace_root().join("crates"))
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    ensure(results.iter().all(|ok| *ok), || "a criterion above failed".into())?;
    let mut crates = crates;
    crates.sort();
    Ok(format!("criteria above pass with workspace crates {crates:?} only"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 6] = [
        ("prompt fidelity", prompt_fidelity, Duration::from_secs(1)),
        ("verdict parser", verdict_parser, Duration::from_secs(1)),
        ("pass@k oracle equivalence", pass_at_k_oracle, Duration::from_secs(10)),
        ("sandbox correctness", sandbox_correctness, Duration::from_secs(120)),
        ("dataset laws", dataset_laws, Duration::from_secs(30)),
        ("determinism", determinism, Duration::from_secs(60)),
    ];
    let mut passed = Vec::new();
    for (name, check, budget) in criteria {
        let started = Instant::now();
        let outcome = check();
        let elapsed = started.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > budget => Err(format!("{detail}; took {elapsed:?}, budget {budget:?}")),
            other => other,
        };
        match &outcome {
            Ok(detail) => println!("PASS {name} [{} ms] {detail}", elapsed.as_millis()),
            Err(reason) => println!("FAIL {name} [{} ms] {reason}", elapsed.as_millis()),
        }
        passed.push(outcome.is_ok());
    }
    match standalone(&passed) {
        Ok(detail) => println!("PASS no training component required {detail}"),
        Err(reason) => println!("FAIL no training component required {reason}"),
    }
    let all = passed.iter().all(|p| *p) && standalone(&passed).is_ok();
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
