use std::io::{self, Read, Write};
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, ExitStatus, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::TestExample;

/// Python preamble run before the solution. It installs an audit hook that
/// refuses file writes outside the scratch directory and process or network
/// creation, then executes the solution and calls `solve()`.
const RUNNER: &str = r#"import os, sys
_src = open("solution.py", encoding="utf-8").read()
_root = os.path.realpath(os.getcwd())
_WRITE = os.O_WRONLY | os.O_RDWR | os.O_APPEND | os.O_CREAT | os.O_TRUNC

def _inside(p):
    if isinstance(p, int):
        return True
    try:
        p = os.path.realpath(os.fsdecode(p))
    except Exception:
        return False
    return p == _root or p.startswith(_root + os.sep)

_ONE = {"os.remove", "os.rmdir", "os.mkdir", "os.chmod", "os.chown", "os.truncate",
        "os.utime", "shutil.rmtree", "os.chflags", "os.lchflags", "os.setxattr", "os.removexattr"}
_BOTH = {"os.rename", "os.link", "os.symlink", "shutil.copyfile", "shutil.copymode",
         "shutil.copystat", "shutil.copytree", "shutil.move"}
_DENY = {"os.system", "os.exec", "os.posix_spawn", "os.spawn", "os.fork", "os.forkpty",
         "subprocess.Popen", "os.kill", "os.killpg", "socket.connect", "socket.bind",
         "socket.sendto", "sys.addaudithook"}

def _guard(event, args):
    if event == "open":
        if args[2] & _WRITE and not _inside(args[0]):
            raise PermissionError("sandbox: write outside scratch directory")
    elif event in _ONE:
        if not _inside(args[0]):
            raise PermissionError("sandbox: " + event + " outside scratch directory")
    elif event in _BOTH:
        if not (_inside(args[0]) and _inside(args[1])):
            raise PermissionError("sandbox: " + event + " outside scratch directory")
    elif event in _DENY:
        raise PermissionError("sandbox: " + event + " is not permitted")

sys.addaudithook(_guard)
del _guard
_ns = {"__name__": "solution", "__builtins__": __builtins__}
exec(compile(_src, "solution.py", "exec"), _ns)
del _src
_ns["solve"]()
"#;

const STDERR_CAP: usize = 64 * 1024;
const FILE_SIZE_CAP: u64 = 64 * 1024 * 1024;
const POLL: Duration = Duration::from_millis(2);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceLimits {
    pub wall_time_per_test: Duration,
    pub memory_bytes: u64,
    pub stdout_cap_bytes: usize,
}

impl Default for ResourceLimits {
    fn default() -> Self {
        ResourceLimits {
            wall_time_per_test: Duration::from_secs(10),
            memory_bytes: 512 * 1024 * 1024,
            stdout_cap_bytes: 1024 * 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("resource limit {0} must be strictly positive")]
pub struct LimitsError(pub &'static str);

impl ResourceLimits {
    pub fn validate(&self) -> Result<(), LimitsError> {
        if self.wall_time_per_test.is_zero() {
            return Err(LimitsError("wall_time_per_test"));
        }
        if self.memory_bytes == 0 {
            return Err(LimitsError("memory"));
        }
        if self.stdout_cap_bytes == 0 {
            return Err(LimitsError("stdout_cap"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestStatus {
    Pass,
    WrongAnswer,
    RuntimeError,
    Timeout,
    OutputOverflow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub status: TestStatus,
    /// Captured stdout, cut at the configured cap.
    pub actual_output: String,
    pub duration: Duration,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub stderr: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub correct: bool,
    pub outcomes: Vec<TestOutcome>,
}

/// The harness itself failed; says nothing about the program.
#[derive(Debug, Error)]
pub enum SandboxSetupError {
    #[error("cannot prepare scratch directory: {0}")]
    Scratch(io::Error),
    #[error("cannot start interpreter {interpreter}: {source}")]
    Spawn { interpreter: PathBuf, source: io::Error },
    #[error("lost contact with child process: {0}")]
    Wait(io::Error),
    #[error(transparent)]
    Limits(#[from] LimitsError),
    #[error("no tests to judge against")]
    NoTests,
}

/// Runs Python solutions against stdin/stdout examples, one fresh child
/// process and scratch directory per test.
#[derive(Debug, Clone)]
pub struct Judge {
    limits: ResourceLimits,
    interpreter: PathBuf,
    fail_fast: bool,
}

impl Default for Judge {
    fn default() -> Self {
        Judge {
            limits: ResourceLimits::default(),
            interpreter: PathBuf::from("python3"),
            fail_fast: true,
        }
    }
}

impl Judge {
    pub fn new(limits: ResourceLimits) -> Result<Self, LimitsError> {
        limits.validate()?;
        Ok(Judge {
            limits,
            ..Judge::default()
        })
    }

    pub fn interpreter(mut self, path: impl Into<PathBuf>) -> Self {
        self.interpreter = path.into();
        self
    }

    /// Stop at the first failing test (default). Disable to collect every
    /// outcome.
    pub fn fail_fast(mut self, enabled: bool) -> Self {
        self.fail_fast = enabled;
        self
    }

    pub fn limits(&self) -> &ResourceLimits {
        &self.limits
    }

    pub fn judge(&self, source: &str, tests: &[TestExample]) -> Result<Verdict, SandboxSetupError> {
        if tests.is_empty() {
            return Err(SandboxSetupError::NoTests);
        }
        let mut outcomes = Vec::with_capacity(tests.len());
        for test in tests {
            let outcome = self.run_one(source, test)?;
            let failed = outcome.status != TestStatus::Pass;
            outcomes.push(outcome);
            if failed && self.fail_fast {
                break;
            }
        }
        let correct = outcomes.len() == tests.len() && outcomes.iter().all(|o| o.status == TestStatus::Pass);
        Ok(Verdict { correct, outcomes })
    }

    pub fn run_one(&self, source: &str, test: &TestExample) -> Result<TestOutcome, SandboxSetupError> {
        let scratch = tempfile::Builder::new()
            .prefix("neogauge-judge-")
            .tempdir()
            .map_err(SandboxSetupError::Scratch)?;
        std::fs::write(scratch.path().join("solution.py"), source).map_err(SandboxSetupError::Scratch)?;
        std::fs::write(scratch.path().join("runner.py"), RUNNER).map_err(SandboxSetupError::Scratch)?;

        let started = Instant::now();
        let mut child = self.spawn(scratch.path())?;
        let pid = child.id() as libc::pid_t;

        let stdin = child.stdin.take().expect("piped stdin");
        let input = test.input.clone().into_bytes();
        let feeder = thread::spawn(move || feed(stdin, &input));

        let overflow = Arc::new(AtomicBool::new(false));
        let stdout = child.stdout.take().expect("piped stdout");
        let cap = self.limits.stdout_cap_bytes;
        let flag = overflow.clone();
        let out_reader = thread::spawn(move || read_capped(stdout, cap, Some(&flag)));
        let stderr = child.stderr.take().expect("piped stderr");
        let err_reader = thread::spawn(move || read_capped(stderr, STDERR_CAP, None));

        let deadline = started + self.limits.wall_time_per_test;
        let mut timed_out = false;
        let status = loop {
            if let Some(status) = child.try_wait().map_err(SandboxSetupError::Wait)? {
                break Some(status);
            }
            if overflow.load(Ordering::Relaxed) {
                kill_group(pid, &mut child);
                break None;
            }
            if Instant::now() >= deadline {
                timed_out = true;
                kill_group(pid, &mut child);
                break None;
            }
            thread::sleep(POLL);
        };
        // Reap anything left in the process group before joining readers.
        kill_group(pid, &mut child);
        let duration = started.elapsed();
        let _ = feeder.join();
        let stdout = out_reader.join().unwrap_or_default();
        let stderr = err_reader.join().unwrap_or_default();

        let actual_output = String::from_utf8_lossy(&stdout).into_owned();
        let status = classify(status, timed_out, overflow.load(Ordering::Relaxed), &actual_output, &test.expected_output);
        Ok(TestOutcome {
            status,
            actual_output,
            duration,
            stderr: String::from_utf8_lossy(&stderr).into_owned(),
        })
    }

    fn spawn(&self, scratch: &Path) -> Result<Child, SandboxSetupError> {
        let memory = self.limits.memory_bytes;
        let cpu_secs = self.limits.wall_time_per_test.as_secs() + 1;
        let mut command = Command::new(&self.interpreter);
        command
            .arg("-I")
            .arg("runner.py")
            .current_dir(scratch)
            .env_clear()
            .env("PATH", "/usr/local/bin:/usr/bin:/bin")
            .env("HOME", scratch)
            .env("TMPDIR", scratch)
            .env("PYTHONIOENCODING", "utf-8")
            .env("PYTHONDONTWRITEBYTECODE", "1")
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .process_group(0);
        // SAFETY: only async-signal-safe setrlimit calls between fork and exec.
        unsafe {
            command.pre_exec(move || {
                set_limit(libc::RLIMIT_AS, memory)?;
                set_limit(libc::RLIMIT_CPU, cpu_secs)?;
                set_limit(libc::RLIMIT_FSIZE, FILE_SIZE_CAP)?;
                set_limit(libc::RLIMIT_CORE, 0)?;
                Ok(())
            });
        }
        command.spawn().map_err(|source| SandboxSetupError::Spawn {
            interpreter: self.interpreter.clone(),
            source,
        })
    }
}

/// Judges with fail-fast and the default interpreter.
pub fn judge(source: &str, tests: &[TestExample], limits: &ResourceLimits) -> Result<Verdict, SandboxSetupError> {
    Judge::new(limits.clone())?.judge(source, tests)
}

fn set_limit(resource: libc::__rlimit_resource_t, value: u64) -> io::Result<()> {
    let limit = libc::rlimit {
        rlim_cur: value as libc::rlim_t,
        rlim_max: value as libc::rlim_t,
    };
    // SAFETY: plain syscall on a stack value.
    if unsafe { libc::setrlimit(resource, &limit) } != 0 {
        return Err(io::Error::last_os_error());
    }
    Ok(())
}

fn kill_group(pid: libc::pid_t, child: &mut Child) {
    // SAFETY: signalling our own child's process group.
    unsafe {
        libc::kill(-pid, libc::SIGKILL);
    }
    let _ = child.kill();
    let _ = child.wait();
}

fn feed(mut stdin: impl Write, input: &[u8]) {
    // The program may exit without reading; a broken pipe is expected then.
    let _ = stdin.write_all(input);
}

fn read_capped(mut pipe: impl Read, cap: usize, overflow: Option<&AtomicBool>) -> Vec<u8> {
    let mut kept = Vec::new();
    let mut chunk = [0u8; 8192];
    loop {
        match pipe.read(&mut chunk) {
            Ok(0) | Err(_) => break,
            Ok(n) => {
                let room = cap.saturating_sub(kept.len());
                kept.extend_from_slice(&chunk[..n.min(room)]);
                if n > room {
                    if let Some(flag) = overflow {
                        flag.store(true, Ordering::Relaxed);
                        break;
                    }
                }
            }
        }
    }
    kept
}

fn classify(status: Option<ExitStatus>, timed_out: bool, overflowed: bool, actual: &str, expected: &str) -> TestStatus {
    if overflowed {
        return TestStatus::OutputOverflow;
    }
    if timed_out {
        return TestStatus::Timeout;
    }
    match status {
        Some(s) if s.success() => {
            if normalize_output(actual) == normalize_output(expected) {
                TestStatus::Pass
            } else {
                TestStatus::WrongAnswer
            }
        }
        _ => TestStatus::RuntimeError,
    }
}

/// Unifies line endings, strips trailing whitespace per line and drops
/// trailing blank lines.
pub fn normalize_output(raw: &str) -> String {
    let unified = raw.replace("\r\n", "\n").replace('\r', "\n");
    let mut lines: Vec<&str> = unified.split('\n').map(str::trim_end).collect();
    while lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    lines.join("\n")
}
