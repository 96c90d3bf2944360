//! Subprocess execution with a wall-clock limit, capped output and, where the
//! host allows unprivileged user namespaces, no network.
//!
//! Every child runs in its own process group so the whole tree can be killed
//! on timeout. The group is also killed after a normal exit, which reaps any
//! background processes the program left behind.

use std::io::Read;
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use wait_timeout::ChildExt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Exit {
    Code(i32),
    Signal(i32),
    TimedOut,
}

#[derive(Debug, Clone)]
pub struct RawRun {
    pub exit: Exit,
    pub stdout: String,
    pub stderr: String,
    pub wall_ms: u64,
}

#[derive(Debug, thiserror::Error)]
#[error("sandbox: {0}")]
pub struct SandboxError(pub String);

/// Locates `program` on `PATH`.
pub fn find_in_path(program: &str) -> Option<PathBuf> {
    if program.contains('/') {
        let p = PathBuf::from(program);
        return p.is_file().then_some(p);
    }
    let path = std::env::var_os("PATH")?;
    std::env::split_paths(&path)
        .map(|dir| dir.join(program))
        .find(|candidate| {
            candidate
                .metadata()
                .map(|m| m.is_file() && std::os::unix::fs::PermissionsExt::mode(&m.permissions()) & 0o111 != 0)
                .unwrap_or(false)
        })
}

/// Whether `unshare -rn` works here; probed once per process.
pub fn network_isolation_available() -> bool {
    static PROBE: OnceLock<bool> = OnceLock::new();
    *PROBE.get_or_init(|| {
        if std::env::var_os("BRIDGE_CODER_NO_NETNS").is_some() {
            return false;
        }
        find_in_path("unshare").is_some_and(|unshare| {
            Command::new(unshare)
                .args(["-rn", "true"])
                .stdin(Stdio::null())
                .stdout(Stdio::null())
                .stderr(Stdio::null())
                .status()
                .map(|s| s.success())
                .unwrap_or(false)
        })
    })
}

fn drain(mut reader: impl Read, cap: usize) -> Vec<u8> {
    let mut kept = Vec::new();
    let mut buf = [0u8; 8192];
    loop {
        match reader.read(&mut buf) {
            Ok(0) | Err(_) => break,
            Ok(n) => {
                let room = cap.saturating_sub(kept.len());
                kept.extend_from_slice(&buf[..n.min(room)]);
            }
        }
    }
    kept
}

fn kill_group(pgid: u32) {
    // SAFETY: kill(2) with a negative pid signals the process group; a stale
    // group id yields ESRCH, which is ignored.
    unsafe {
        libc::kill(-(pgid as libc::pid_t), libc::SIGKILL);
    }
}

/// Runs `argv` in `workdir` with a cleared environment.
pub fn run(argv: &[String], workdir: &Path, timeout: Duration, max_output_bytes: usize) -> Result<RawRun, SandboxError> {
    let (program, args) = argv.split_first().ok_or_else(|| SandboxError("empty command".into()))?;
    let mut cmd = if network_isolation_available() {
        let mut c = Command::new("unshare");
        c.args(["-rn", "--"]).arg(program).args(args);
        c
    } else {
        let mut c = Command::new(program);
        c.args(args);
        c
    };
    cmd.current_dir(workdir)
        .env_clear()
        .env("PATH", std::env::var_os("PATH").unwrap_or_default())
        .env("HOME", workdir)
        .env("TMPDIR", workdir)
        .env("LANG", "C.UTF-8")
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    // SAFETY: only async-signal-safe calls between fork and exec.
    unsafe {
        cmd.pre_exec(|| {
            if libc::setpgid(0, 0) != 0 {
                return Err(std::io::Error::last_os_error());
            }
            let core = libc::rlimit { rlim_cur: 0, rlim_max: 0 };
            libc::setrlimit(libc::RLIMIT_CORE, &core);
            let fsize = libc::rlimit { rlim_cur: 256 << 20, rlim_max: 256 << 20 };
            libc::setrlimit(libc::RLIMIT_FSIZE, &fsize);
            Ok(())
        });
    }

    let started = Instant::now();
    let mut child = cmd.spawn().map_err(|e| SandboxError(format!("spawn {program}: {e}")))?;
    let pgid = child.id();

    let (tx, rx) = mpsc::channel();
    for (idx, stream) in [
        child.stdout.take().map(|s| Box::new(s) as Box<dyn Read + Send>),
        child.stderr.take().map(|s| Box::new(s) as Box<dyn Read + Send>),
    ]
    .into_iter()
    .enumerate()
    {
        let tx = tx.clone();
        if let Some(stream) = stream {
            std::thread::spawn(move || {
                let _ = tx.send((idx, drain(stream, max_output_bytes)));
            });
        }
    }
    drop(tx);

    let status = child
        .wait_timeout(timeout)
        .map_err(|e| SandboxError(format!("wait: {e}")))?;
    let exit = match status {
        Some(s) => match (s.code(), s.signal()) {
            (Some(code), _) => Exit::Code(code),
            (None, Some(sig)) => Exit::Signal(sig),
            (None, None) => Exit::Signal(0),
        },
        None => {
            kill_group(pgid);
            let _ = child.wait();
            Exit::TimedOut
        }
    };
    let wall_ms = started.elapsed().as_millis() as u64;
    kill_group(pgid);

    let mut out = [Vec::new(), Vec::new()];
    let deadline = Instant::now() + Duration::from_secs(2);
    while let Ok((idx, bytes)) = rx.recv_timeout(deadline.saturating_duration_since(Instant::now())) {
        out[idx] = bytes;
    }
    let [stdout, stderr] = out.map(|b| String::from_utf8_lossy(&b).into_owned());
    Ok(RawRun { exit, stdout, stderr, wall_ms })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sh(script: &str, timeout_ms: u64, cap: usize) -> RawRun {
        let dir = tempfile::tempdir().unwrap();
        run(
            &["bash".into(), "-c".into(), script.into()],
            dir.path(),
            Duration::from_millis(timeout_ms),
            cap,
        )
        .unwrap()
    }

    #[test]
    fn exit_codes_and_output() {
        let r = sh("echo hi; echo err >&2; exit 3", 5000, 1024);
        assert_eq!(r.exit, Exit::Code(3));
        assert_eq!(r.stdout, "hi\n");
        assert_eq!(r.stderr, "err\n");
    }

    #[test]
    fn output_is_capped() {
        let r = sh("yes | head -c 100000", 5000, 1000);
        assert_eq!(r.exit, Exit::Code(0));
        assert_eq!(r.stdout.len(), 1000);
    }

    #[test]
    fn timeout_kills_process_tree() {
        let dir = tempfile::tempdir().unwrap();
        let marker = dir.path().join("alive");
        let script = format!("(sleep 3; touch {}) & while true; do :; done", marker.display());
        let r = run(&["bash".into(), "-c".into(), script], dir.path(), Duration::from_millis(500), 1024).unwrap();
        assert_eq!(r.exit, Exit::TimedOut);
        assert!(r.wall_ms >= 500 && r.wall_ms < 1500, "{}", r.wall_ms);
        std::thread::sleep(Duration::from_millis(3500));
        assert!(!marker.exists(), "background child survived the timeout");
    }

    #[test]
    fn environment_is_cleared() {
        std::env::set_var("BRIDGE_CODER_SECRET_TEST", "leak");
        let r = sh("echo \"[$BRIDGE_CODER_SECRET_TEST]\"; pwd", 5000, 1024);
        assert!(r.stdout.starts_with("[]\n"));
    }

    #[test]
    fn network_is_unreachable_when_isolated() {
        if !network_isolation_available() {
            return;
        }
        // a fresh network namespace holds only loopback and has no routes
        let r = sh("tail -n +3 /proc/net/dev | cut -d: -f1 | tr -d ' '; tail -n +2 /proc/net/route | wc -l", 5000, 1024);
        assert_eq!(r.stdout, "lo\n0\n");
    }
}
