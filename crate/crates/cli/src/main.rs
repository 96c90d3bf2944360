//! `bridge-coder`: run the data-generation pipeline, or any single stage of
//! it, and evaluate target-language candidates in a sandbox.
//!
//! Exit status is 0 when every requested stage completed, 1 on any failure
//! (with a diagnostic on stderr) and 2 on a usage error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use bridge_coder_core::bridge::AssistFormat;
use bridge_coder_core::config::{PipelineConfig, TransferMode};
use bridge_coder_core::dataset::{AlignmentMode, CurriculumSchedule};
use bridge_coder_core::eval::{self, EvalConfig, EvalError, Limits};
use bridge_coder_core::jsonl::{self, JsonlError};
use bridge_coder_core::model::{CodeBridge, DatasetManifest, LanguageName, ScreeningVerdict, TargetSolution, Task, TrainingExample};
use bridge_coder_core::pipeline::{run_pipeline, RunOptions, RunOutcome, Stage};
use bridge_coder_core::validate::{validate_provenance, validate_unique_ids, Validate};

#[derive(Parser)]
#[command(name = "bridge-coder", version, about = "Bridge-guided instruction data for low-resource programming languages")]
struct Cli {
    /// More log output (-v debug, -vv trace). RUST_LOG takes precedence.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage, skipping those already complete for this config.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        no_screening: bool,
        /// Language of the code-bridge (python, cpp, java).
        #[arg(long)]
        bridge_lang: Option<LanguageName>,
        #[arg(long)]
        assist_format: Option<AssistFormat>,
        /// bridge: guided by the code-bridge; direct: instruction only.
        #[arg(long)]
        transfer_mode: Option<TransferMode>,
        #[arg(long)]
        alignment: Option<AlignmentMode>,
    },
    /// Screen the seeded tasks for the target language.
    Screen {
        #[command(flatten)]
        common: Common,
        /// Pass every task through.
        #[arg(long)]
        no_screening: bool,
    },
    /// Synthesize commented code-bridges for the screened tasks.
    Bridge {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        bridge_lang: Option<LanguageName>,
    },
    /// Generate target-language solutions.
    Transfer {
        #[command(flatten)]
        common: Common,
        /// bridge or direct.
        #[arg(long)]
        mode: Option<TransferMode>,
    },
    /// Build the training datasets and the curriculum schedule.
    Assemble {
        #[command(flatten)]
        common: Common,
        /// separate, direct, assist or bridged.
        #[arg(long)]
        mode: Option<AlignmentMode>,
        /// pl_only, nl_only or nl_plus_pl.
        #[arg(long)]
        assist_format: Option<AssistFormat>,
        /// Bridged mode: split records between the two phases.
        #[arg(long)]
        partition: bool,
    },
    /// Execute candidates against a benchmark and report pass@k.
    Evaluate(EvaluateArgs),
    /// Check stage files against the record invariants.
    Validate {
        /// Stage files, or output directories to check as a whole.
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(short, long)]
    config: PathBuf,
    /// Overrides `out_dir` from the config.
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Benchmark problems: one JSON object per line with id, prompt, tests, stop_sequences.
    #[arg(long)]
    benchmark: PathBuf,
    #[arg(long)]
    language: LanguageName,
    /// Candidates: one JSON object per line with problem_id and completion.
    #[arg(long)]
    candidates: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
    k: Vec<u64>,
    /// Use the first n candidates of each problem.
    #[arg(long)]
    n: Option<usize>,
    /// Seconds per program.
    #[arg(long, default_value_t = 10.0)]
    timeout: f64,
    #[arg(long, default_value_t = 64 * 1024)]
    max_output_bytes: usize,
    #[arg(long)]
    workers: Option<usize>,
    /// Recorded in the report, e.g. "greedy" or "T=0.8 top_p=0.95".
    #[arg(long)]
    decoding: Option<String>,
    /// Write the JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct CandidateLine {
    problem_id: String,
    completion: String,
}

fn load_config(common: &Common) -> Result<PipelineConfig> {
    let mut config = PipelineConfig::load(&common.config).with_context(|| format!("loading {}", common.config.display()))?;
    if let Some(out) = &common.out {
        config.out_dir = out.clone();
    }
    if let Some(w) = common.workers {
        config.workers = w;
    }
    Ok(config)
}

fn run_stages(config: &PipelineConfig, stages: Option<Vec<Stage>>) -> Result<()> {
    let outcome = run_pipeline(config, &RunOptions { stages, created_at: None })?;
    report_outcome(config, &outcome);
    Ok(())
}

fn report_outcome(config: &PipelineConfig, outcome: &RunOutcome) {
    let names = |s: &[Stage]| s.iter().map(Stage::as_str).collect::<Vec<_>>().join(", ");
    if !outcome.loaded.is_empty() {
        println!("reused:  {}", names(&outcome.loaded));
    }
    println!("ran:     {}", names(&outcome.ran));
    let c = &outcome.manifest.counts;
    println!(
        "counts:  seeded={} screened_in={} screened_out={} bridged={} transferred={} emitted_assist={} emitted_direct={} emitted_bridge={}",
        c.seeded, c.screened_in, c.screened_out, c.bridged, c.transferred, c.emitted_assist, c.emitted_direct, c.emitted_bridge
    );
    println!("output:  {}", config.out_dir.display());
}

fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let problems = eval::load_benchmark(&args.benchmark, &args.language, args.timeout)?;
    let lines: Vec<CandidateLine> = jsonl::read(&args.candidates)?;
    let mut candidates: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for l in lines {
        candidates.entry(l.problem_id).or_default().push(l.completion);
    }
    if let Some(n) = args.n {
        for (id, list) in candidates.iter_mut() {
            if list.len() < n {
                bail!("problem {id} has {} candidates, fewer than --n {n}", list.len());
            }
            list.truncate(n);
        }
    }
    let mut config = EvalConfig {
        k: args.k.clone(),
        limits: Limits { timeout_s: args.timeout, max_output_bytes: args.max_output_bytes },
        decoding: args.decoding.clone(),
        ..EvalConfig::default()
    };
    if let Some(w) = args.workers {
        config.workers = w;
    }
    let report = eval::evaluate(&candidates, &problems, &config)?;
    print!("{}", report.render_table());
    if let Some(path) = &args.report {
        let text = serde_json::to_string_pretty(&report)? + "\n";
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

/// Diagnostics for one file: `(line, message)`, line 0 for whole-file issues.
type Findings = Vec<(usize, String)>;

fn check_records<T: Validate + serde::de::DeserializeOwned>(path: &Path) -> std::result::Result<(Vec<T>, Findings), JsonlError> {
    let records: Vec<T> = jsonl::read(path)?;
    let findings = records
        .iter()
        .enumerate()
        .flat_map(|(i, r)| r.validate().violations.into_iter().map(move |v| (i + 1, v)))
        .collect();
    Ok((records, findings))
}

fn check_json<T: Validate + serde::de::DeserializeOwned>(path: &Path) -> Result<Findings> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    match serde_json::from_str::<T>(&text) {
        Ok(v) => Ok(v.validate().violations.into_iter().map(|v| (0, v)).collect()),
        Err(e) => Ok(vec![(e.line(), e.to_string())]),
    }
}

fn validate_file(path: &Path) -> Result<Findings> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    let parsed = match name {
        "tasks.jsonl" => check_records::<Task>(path).map(|(tasks, mut f)| {
            f.extend(validate_unique_ids(tasks.iter().map(|t| t.id.as_str())).into_iter().map(|(i, v)| (i + 1, v)));
            f
        }),
        "verdicts.jsonl" => check_records::<ScreeningVerdict>(path).map(|r| r.1),
        "bridges.jsonl" => check_records::<CodeBridge>(path).map(|r| r.1),
        "solutions.jsonl" => check_records::<TargetSolution>(path).map(|r| r.1),
        "manifest.json" => return check_json::<DatasetManifest>(path),
        "schedule.json" => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            return Ok(match serde_json::from_str::<CurriculumSchedule>(&text) {
                Ok(_) => vec![],
                Err(e) => vec![(e.line(), e.to_string())],
            });
        }
        n if n.starts_with("dataset-") && n.ends_with(".jsonl") => check_records::<TrainingExample>(path).map(|r| r.1),
        _ => bail!("{}: unrecognized stage file name", path.display()),
    };
    match parsed {
        Ok(findings) => Ok(findings),
        Err(JsonlError::Parse { line, source, .. }) => Ok(vec![(line, source.to_string())]),
        Err(e) => Err(e.into()),
    }
}

const STAGE_FILES: [&str; 5] = ["tasks.jsonl", "verdicts.jsonl", "bridges.jsonl", "solutions.jsonl", "manifest.json"];

fn validate(paths: &[PathBuf]) -> Result<()> {
    let mut failures = 0usize;
    let mut report = |path: &Path, findings: Findings| {
        for (line, msg) in &findings {
            if *line > 0 {
                eprintln!("{}:{line}: {msg}", path.display());
            } else {
                eprintln!("{}: {msg}", path.display());
            }
        }
        failures += findings.len();
    };
    for path in paths {
        if !path.is_dir() {
            let findings = validate_file(path)?;
            report(path, findings);
            continue;
        }
        let mut files: Vec<PathBuf> = STAGE_FILES.iter().map(|f| path.join(f)).filter(|p| p.is_file()).collect();
        for entry in std::fs::read_dir(path).with_context(|| format!("reading {}", path.display()))? {
            let p = entry?.path();
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
            if (name.starts_with("dataset-") && name.ends_with(".jsonl")) || name == "schedule.json" {
                files.push(p);
            }
        }
        files.sort();
        for f in &files {
            let findings = validate_file(f)?;
            report(f, findings);
        }
        let (solutions, bridges) = (path.join("solutions.jsonl"), path.join("bridges.jsonl"));
        if solutions.is_file() && bridges.is_file() {
            if let (Ok(s), Ok(b)) = (jsonl::read::<TargetSolution>(&solutions), jsonl::read::<CodeBridge>(&bridges)) {
                report(&solutions, validate_provenance(&s, &b).into_iter().map(|(i, v)| (i + 1, v)).collect());
            }
        }
    }
    if failures > 0 {
        bail!("{failures} violation(s)");
    }
    println!("ok");
    Ok(())
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run { common, no_screening, bridge_lang, assist_format, transfer_mode, alignment } => {
            let mut config = load_config(&common)?;
            config.screening &= !no_screening;
            if let Some(l) = bridge_lang {
                config.bridge_language = l;
            }
            if let Some(f) = assist_format {
                config.assist_format = f;
            }
            if let Some(m) = transfer_mode {
                config.transfer_mode = m;
            }
            if let Some(a) = alignment {
                config.alignment = a;
            }
            run_stages(&config, None)
        }
        Command::Screen { common, no_screening } => {
            let mut config = load_config(&common)?;
            config.screening &= !no_screening;
            run_stages(&config, Some(vec![Stage::Seed, Stage::Screen]))
        }
        Command::Bridge { common, bridge_lang } => {
            let mut config = load_config(&common)?;
            if let Some(l) = bridge_lang {
                config.bridge_language = l;
            }
            run_stages(&config, Some(vec![Stage::Bridge]))
        }
        Command::Transfer { common, mode } => {
            let mut config = load_config(&common)?;
            if let Some(m) = mode {
                config.transfer_mode = m;
            }
            run_stages(&config, Some(vec![Stage::Transfer]))
        }
        Command::Assemble { common, mode, assist_format, partition } => {
            let mut config = load_config(&common)?;
            if let Some(m) = mode {
                config.alignment = m;
            }
            if let Some(f) = assist_format {
                config.assist_format = f;
            }
            config.partition |= partition;
            run_stages(&config, Some(vec![Stage::Assemble]))
        }
        Command::Evaluate(args) => evaluate(&args),
        Command::Validate { paths } => validate(&paths),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(level)))
        .with_writer(std::io::stderr)
        .init();

    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let Some(EvalError::ToolchainMissing { language, runnable }) = e.downcast_ref::<EvalError>() {
                eprintln!("error: no toolchain for {language} on this host");
                eprintln!("runnable languages: {}", if runnable.is_empty() { "none".to_string() } else { runnable.join(", ") });
            } else {
                eprintln!("error: {e:#}");
            }
            ExitCode::FAILURE
        }
    }
}
