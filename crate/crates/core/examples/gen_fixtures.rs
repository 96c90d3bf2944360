//! Writes `tasks.jsonl` and `fixtures.json` for a scripted mock run.
//!
//! usage: gen_fixtures <script.jsonl> <target-language> <bridge-language> <out-dir>

use std::path::PathBuf;
use std::process::ExitCode;

use bridge_coder_core::jsonl;
use bridge_coder_core::model::{LanguageId, LanguageName, Task};
use bridge_coder_core::script::{build_fixtures, ScriptedTask};

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let [script, target, hrpl, out] = args.as_slice() else {
        eprintln!("usage: gen_fixtures <script.jsonl> <target-language> <bridge-language> <out-dir>");
        return ExitCode::from(2);
    };
    let script: Vec<ScriptedTask> = match jsonl::read(&PathBuf::from(script)) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::FAILURE;
        }
    };
    let target = LanguageId::lrpl(target.parse::<LanguageName>().expect("infallible"));
    let hrpl = LanguageId::hrpl(hrpl.parse::<LanguageName>().expect("infallible"));
    let fixtures = match build_fixtures(&script, &target, &hrpl) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::FAILURE;
        }
    };
    let out = PathBuf::from(out);
    let tasks: Vec<Task> = script.iter().map(ScriptedTask::task).collect();
    let written = jsonl::write(&out.join("tasks.jsonl"), &tasks)
        .map_err(|e| e.to_string())
        .and_then(|()| std::fs::write(out.join("fixtures.json"), fixtures.to_json() + "\n").map_err(|e| e.to_string()));
    if let Err(e) = written {
        eprintln!("{e}");
        return ExitCode::FAILURE;
    }
    println!("{} tasks, {} fixtures", tasks.len(), fixtures.len());
    ExitCode::SUCCESS
}
