//! Per-language build/run recipes.

use std::path::PathBuf;

use crate::model::LanguageName;

use super::sandbox::{find_in_path, Exit, RawRun};
use super::Verdict;

#[derive(Debug, Clone)]
struct Compile {
    /// Binaries to try, first found wins: `(program, args)` where `{src}` and
    /// `{bin}` are substituted.
    candidates: &'static [(&'static str, &'static [&'static str])],
}

#[derive(Debug, Clone)]
pub struct RunnerSpec {
    pub language: LanguageName,
    pub source_file: &'static str,
    compile: Option<Compile>,
    /// Interpreter for scripts; `None` means run the compiled binary.
    interpreter: Option<(&'static str, &'static [&'static str])>,
}

/// A runner whose toolchain was found on this host.
#[derive(Debug, Clone)]
pub struct Runner {
    pub spec: RunnerSpec,
    compile_argv: Option<Vec<String>>,
    run_argv: Vec<String>,
}

const BIN: &str = "prog";

impl RunnerSpec {
    pub fn for_language(language: &LanguageName) -> Option<RunnerSpec> {
        let spec = match language {
            LanguageName::Bash => RunnerSpec {
                language: language.clone(),
                source_file: "prog.sh",
                compile: None,
                interpreter: Some(("bash", &[])),
            },
            LanguageName::Racket => RunnerSpec {
                language: language.clone(),
                source_file: "prog.rkt",
                compile: None,
                interpreter: Some(("racket", &[])),
            },
            LanguageName::R => RunnerSpec {
                language: language.clone(),
                source_file: "prog.r",
                compile: None,
                interpreter: Some(("Rscript", &["--vanilla"])),
            },
            LanguageName::D => RunnerSpec {
                language: language.clone(),
                source_file: "prog.d",
                compile: Some(Compile {
                    candidates: &[
                        ("ldc2", &["-unittest", "-of={bin}", "{src}"]),
                        ("dmd", &["-unittest", "-of{bin}", "{src}"]),
                        ("gdc", &["-funittest", "-o", "{bin}", "{src}"]),
                    ],
                }),
                interpreter: None,
            },
            _ => return None,
        };
        Some(spec)
    }

    /// Resolves toolchain binaries on `PATH`; `None` when any is missing.
    pub fn probe(&self) -> Option<Runner> {
        let subst = |a: &str| a.replace("{src}", self.source_file).replace("{bin}", BIN);
        let compile_argv = match &self.compile {
            None => None,
            Some(c) => {
                let (path, args) = c
                    .candidates
                    .iter()
                    .find_map(|(prog, args)| find_in_path(prog).map(|p| (p, args)))?;
                let mut argv = vec![path.display().to_string()];
                argv.extend(args.iter().map(|a| subst(a)));
                Some(argv)
            }
        };
        let run_argv = match self.interpreter {
            Some((prog, args)) => {
                let path: PathBuf = find_in_path(prog)?;
                let mut argv = vec![path.display().to_string()];
                argv.extend(args.iter().map(|a| a.to_string()));
                argv.push(self.source_file.to_string());
                argv
            }
            None => vec![format!("./{BIN}")],
        };
        Some(Runner { spec: self.clone(), compile_argv, run_argv })
    }
}

/// Languages with a runner recipe.
pub fn known_languages() -> Vec<LanguageName> {
    vec![LanguageName::Bash, LanguageName::Racket, LanguageName::R, LanguageName::D]
}

/// Languages whose toolchain is present on this host.
pub fn runnable_languages() -> Vec<LanguageName> {
    known_languages()
        .into_iter()
        .filter(|l| RunnerSpec::for_language(l).and_then(|s| s.probe()).is_some())
        .collect()
}

impl Runner {
    pub fn compile_argv(&self) -> Option<&[String]> {
        self.compile_argv.as_deref()
    }

    pub fn run_argv(&self) -> &[String] {
        &self.run_argv
    }

    /// Verdict for the run phase of a program that built successfully.
    pub fn classify(&self, run: &RawRun) -> Verdict {
        match run.exit {
            Exit::TimedOut => Verdict::Timeout,
            Exit::Signal(_) => Verdict::RuntimeError,
            Exit::Code(0) => {
                // rackunit reports failed checks on stderr without failing the process
                if self.spec.language == LanguageName::Racket && run.stderr.contains("FAILURE") {
                    Verdict::Fail
                } else {
                    Verdict::Pass
                }
            }
            Exit::Code(126 | 127) if self.spec.language == LanguageName::Bash => Verdict::RuntimeError,
            Exit::Code(_) => Verdict::Fail,
        }
    }
}
