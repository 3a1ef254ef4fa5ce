//! External-process backend: compile once, then time each test `repeat` times.

use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use tempfile::TempDir;
use wait_timeout::ChildExt;

use super::{outputs_match, TestResult, TestStatus};
use crate::corpus::Problem;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessConfig {
    /// Shell command run per test. Placeholders: `{src}`, `{bin}`, `{input_file}`.
    /// The test input is also on stdin.
    pub command: String,
    /// Optional build command run once per solution; same placeholders minus `{input_file}`.
    #[serde(default)]
    pub compile: Option<String>,
    /// Source file name written into the scratch directory.
    #[serde(default = "default_src_name")]
    pub src_name: String,
    /// Wall-clock limit per run; the problem's `step_limit` is used when absent.
    #[serde(default)]
    pub time_limit_ms: Option<u64>,
    #[serde(default)]
    pub memory_limit_mb: Option<u64>,
    #[serde(default = "default_repeat")]
    pub repeat: usize,
}

fn default_src_name() -> String {
    "main.src".to_string()
}

fn default_repeat() -> usize {
    5
}

impl ProcessConfig {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            command: command.into(),
            compile: None,
            src_name: default_src_name(),
            time_limit_ms: None,
            memory_limit_mb: None,
            repeat: default_repeat(),
        }
    }
}

fn quote(p: &Path) -> String {
    format!("'{}'", p.display().to_string().replace('\'', r"'\''"))
}

pub(super) struct Prepared {
    dir: TempDir,
    src: PathBuf,
    bin: PathBuf,
}

enum RunOutcome {
    Exited { ok: bool, stdout: String, stderr: String, millis: f64 },
    TimedOut { millis: f64 },
    LaunchFailed(String),
}

impl Prepared {
    /// Writes the source and runs the compile step. Errors are verdict notes.
    pub(super) fn new(cfg: &ProcessConfig, code: &str) -> Result<Self, (TestStatus, String)> {
        let infra = |m: String| (TestStatus::InfraError, m);
        let dir = tempfile::tempdir().map_err(|e| infra(format!("scratch dir: {e}")))?;
        let src = dir.path().join(&cfg.src_name);
        let bin = dir.path().join("main.bin");
        fs::write(&src, code).map_err(|e| infra(format!("write source: {e}")))?;
        let prepared = Self { dir, src, bin };
        if let Some(compile) = &cfg.compile {
            let cmd = prepared.expand(compile, None);
            let out = Command::new("sh")
                .arg("-c")
                .arg(&cmd)
                .current_dir(prepared.dir.path())
                .stdin(Stdio::null())
                .output()
                .map_err(|e| infra(format!("compile launch failed: {e}")))?;
            if !out.status.success() {
                return Err((TestStatus::Error, format!("compile failed: {}", String::from_utf8_lossy(&out.stderr).trim())));
            }
        }
        Ok(prepared)
    }

    fn expand(&self, template: &str, input: Option<&Path>) -> String {
        let mut s = template.replace("{src}", &quote(&self.src)).replace("{bin}", &quote(&self.bin));
        if let Some(input) = input {
            s = s.replace("{input_file}", &quote(input));
        }
        s
    }

    fn run_once(&self, cfg: &ProcessConfig, input: &Path, limit: Duration, tag: &str) -> RunOutcome {
        let mut script = self.expand(&cfg.command, Some(input));
        if let Some(mb) = cfg.memory_limit_mb {
            script = format!("ulimit -v {}; {script}", mb * 1024);
        }
        let out_path = self.dir.path().join(format!("{tag}.out"));
        let err_path = self.dir.path().join(format!("{tag}.err"));
        let files = (|| Ok::<_, std::io::Error>((File::open(input)?, File::create(&out_path)?, File::create(&err_path)?)))();
        let (stdin, stdout, stderr) = match files {
            Ok(f) => f,
            Err(e) => return RunOutcome::LaunchFailed(e.to_string()),
        };
        let start = Instant::now();
        let mut child = match Command::new("sh")
            .arg("-c")
            .arg(&script)
            .current_dir(self.dir.path())
            .stdin(stdin)
            .stdout(stdout)
            .stderr(stderr)
            .spawn()
        {
            Ok(c) => c,
            Err(e) => return RunOutcome::LaunchFailed(e.to_string()),
        };
        let waited = child.wait_timeout(limit);
        let millis = start.elapsed().as_secs_f64() * 1000.0;
        match waited {
            Ok(Some(status)) => RunOutcome::Exited {
                ok: status.success(),
                stdout: fs::read_to_string(&out_path).unwrap_or_default(),
                stderr: fs::read_to_string(&err_path).unwrap_or_default(),
                millis,
            },
            Ok(None) => {
                let _ = child.kill();
                let _ = child.wait();
                RunOutcome::TimedOut { millis }
            }
            Err(e) => RunOutcome::LaunchFailed(e.to_string()),
        }
    }

    /// Times one test `repeat` times and reports the mean wall time in milliseconds.
    /// Every repetition must produce the expected output.
    pub(super) fn run_test(&self, cfg: &ProcessConfig, problem: &Problem, test: usize) -> TestResult {
        let case = &problem.tests[test];
        let input = self.dir.path().join(format!("test{test}.in"));
        if let Err(e) = fs::write(&input, &case.input) {
            return TestResult { status: TestStatus::InfraError, runtime: 0.0, note: Some(format!("write input: {e}")) };
        }
        let limit = Duration::from_millis(cfg.time_limit_ms.unwrap_or(problem.step_limit));
        let mut total = 0.0;
        let repeat = cfg.repeat.max(1);
        for r in 0..repeat {
            match self.run_once(cfg, &input, limit, &format!("test{test}-{r}")) {
                RunOutcome::Exited { ok: true, stdout, millis, .. } => {
                    if !outputs_match(&stdout, &case.output) {
                        return TestResult { status: TestStatus::WrongOutput, runtime: millis, note: None };
                    }
                    total += millis;
                }
                RunOutcome::Exited { ok: false, stderr, millis, .. } => {
                    let note = format!("nonzero exit: {}", stderr.trim());
                    return TestResult { status: TestStatus::Error, runtime: millis, note: Some(note) };
                }
                RunOutcome::TimedOut { millis } => {
                    return TestResult { status: TestStatus::Timeout, runtime: millis, note: Some("wall-time limit".into()) };
                }
                RunOutcome::LaunchFailed(e) => {
                    return TestResult { status: TestStatus::InfraError, runtime: 0.0, note: Some(format!("launch failed: {e}")) };
                }
            }
        }
        TestResult { status: TestStatus::Passed, runtime: total / repeat as f64, note: None }
    }
}
