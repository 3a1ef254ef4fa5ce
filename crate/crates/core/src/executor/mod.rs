//! Running solutions against test cases and turning the results into
//! verdicts, runtimes and per-problem runtime statistics.

mod label;
mod process;

use serde::{Deserialize, Serialize};

use crate::corpus::{Problem, Solution};
use crate::minilang::{self, ExecStatus};

pub use label::{label_corpus, median, LabelEntry, LabelReport, ProblemStats};
pub use process::ProcessConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictStatus {
    Correct,
    WrongOutput,
    Error,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestStatus {
    Passed,
    WrongOutput,
    Error,
    Timeout,
    /// The backend could not run the program at all (scratch space, spawn failure).
    InfraError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub status: TestStatus,
    /// Cost units: interpreter steps, or milliseconds for the process backend.
    pub runtime: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl TestResult {
    pub fn passed(&self) -> bool {
        self.status == TestStatus::Passed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub status: VerdictStatus,
    pub per_test: Vec<TestResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub avg_runtime: Option<f64>,
}

impl Verdict {
    /// Folds per-test results: any timeout wins, then any error, then any wrong output.
    pub fn from_tests(per_test: Vec<TestResult>) -> Self {
        let has = |s| per_test.iter().any(|t| t.status == s);
        let status = if per_test.is_empty() {
            VerdictStatus::Error
        } else if has(TestStatus::Timeout) {
            VerdictStatus::Timeout
        } else if has(TestStatus::Error) || has(TestStatus::InfraError) {
            VerdictStatus::Error
        } else if has(TestStatus::WrongOutput) {
            VerdictStatus::WrongOutput
        } else {
            VerdictStatus::Correct
        };
        let avg_runtime = (status == VerdictStatus::Correct)
            .then(|| per_test.iter().map(|t| t.runtime).sum::<f64>() / per_test.len() as f64);
        Self { status, per_test, avg_runtime }
    }

    /// Every test fails with the same error, e.g. when the program does not parse.
    pub fn all_error(tests: usize, note: &str) -> Self {
        Self::all_with(tests, TestStatus::Error, note)
    }

    pub fn all_with(tests: usize, status: TestStatus, note: &str) -> Self {
        let per_test = (0..tests.max(1))
            .map(|_| TestResult { status, runtime: 0.0, note: Some(note.to_string()) })
            .collect();
        Self::from_tests(per_test)
    }

    pub fn is_correct(&self) -> bool {
        self.status == VerdictStatus::Correct
    }

    /// True when some test failed for reasons outside the program.
    pub fn infra_failure(&self) -> bool {
        self.per_test.iter().any(|t| t.status == TestStatus::InfraError)
    }

    /// Notes attached to failing tests, for logs.
    pub fn notes(&self) -> Vec<String> {
        self.per_test.iter().filter_map(|t| t.note.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Backend {
    Minilang,
    Process(ProcessConfig),
}

#[derive(Debug, thiserror::Error)]
pub enum ExecError {
    #[error("domain error: {0}")]
    Domain(String),
}

/// Strips trailing whitespace from each line and trailing blank lines.
pub fn normalize_output(text: &str) -> String {
    let mut lines: Vec<&str> = text.lines().map(str::trim_end).collect();
    while lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    lines.join("\n")
}

pub fn outputs_match(actual: &str, expected: &str) -> bool {
    normalize_output(actual) == normalize_output(expected)
}

/// Runs one parsed minilang program on one test case.
pub fn run_minilang_test(program: &minilang::Program, problem: &Problem, test: usize) -> TestResult {
    let case = &problem.tests[test];
    let inputs = match minilang::parse_values(&case.input) {
        Ok(v) => v,
        Err(e) => return TestResult { status: TestStatus::Error, runtime: 0.0, note: Some(format!("bad test input: {e}")) },
    };
    let out = minilang::run(program, &inputs, problem.step_limit);
    let runtime = out.steps as f64;
    match out.status {
        ExecStatus::StepLimitExceeded => {
            TestResult { status: TestStatus::Timeout, runtime, note: Some("step limit exceeded".to_string()) }
        }
        ExecStatus::RuntimeError => TestResult { status: TestStatus::Error, runtime, note: out.error },
        ExecStatus::Ok => {
            if outputs_match(&minilang::format_values(&out.outputs), &case.output) {
                TestResult { status: TestStatus::Passed, runtime, note: None }
            } else {
                TestResult { status: TestStatus::WrongOutput, runtime, note: None }
            }
        }
    }
}

/// Runs `code` on every test case of `problem`; never short-circuits.
pub fn evaluate_code(code: &str, problem: &Problem, backend: &Backend) -> Verdict {
    if problem.tests.is_empty() {
        return Verdict::all_error(1, "problem has no test cases");
    }
    match backend {
        Backend::Minilang => match minilang::parse(code) {
            Ok(program) => Verdict::from_tests((0..problem.tests.len()).map(|i| run_minilang_test(&program, problem, i)).collect()),
            Err(e) => Verdict::all_error(problem.tests.len(), &e.to_string()),
        },
        Backend::Process(cfg) => match process::Prepared::new(cfg, code) {
            Ok(prepared) => {
                Verdict::from_tests((0..problem.tests.len()).map(|i| prepared.run_test(cfg, problem, i)).collect())
            }
            Err((status, note)) => Verdict::all_with(problem.tests.len(), status, &note),
        },
    }
}

pub fn evaluate(solution: &Solution, problem: &Problem, backend: &Backend) -> Verdict {
    evaluate_code(&solution.code, problem, backend)
}

/// `baseline_runtime / runtime`.
pub fn speedup(baseline_runtime: f64, runtime: f64) -> Result<f64, ExecError> {
    if !(runtime > 0.0) {
        return Err(ExecError::Domain(format!("runtime must be positive, got {runtime}")));
    }
    Ok(baseline_runtime / runtime)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Source, TestCase};

    fn problem(tests: &[(&str, &str)], step_limit: u64) -> Problem {
        Problem {
            id: "p".into(),
            statement: String::new(),
            tests: tests.iter().map(|(i, o)| TestCase { input: i.to_string(), output: o.to_string() }).collect(),
            step_limit,
            source: Source::Contest,
            median_runtime: None,
        }
    }

    #[test]
    fn averages_step_counts() {
        let p = problem(&[("1", "1"), ("2", "3"), ("3", "6")], 1000);
        let code = "s = 0; i = 1; while (i <= in0) { s = s + i; i = i + 1; } print(s);";
        let v = evaluate_code(code, &p, &Backend::Minilang);
        assert_eq!(v.status, VerdictStatus::Correct);
        let steps: Vec<f64> = v.per_test.iter().map(|t| t.runtime).collect();
        assert_eq!(v.avg_runtime, Some(steps.iter().sum::<f64>() / 3.0));
        assert!(steps[0] < steps[1] && steps[1] < steps[2]);
        assert_eq!(steps[1] - steps[0], steps[2] - steps[1]);
    }

    #[test]
    fn wrong_on_second_test() {
        let p = problem(&[("1", "1"), ("2", "5"), ("3", "3")], 1000);
        let v = evaluate_code("print(in0);", &p, &Backend::Minilang);
        assert_eq!(v.status, VerdictStatus::WrongOutput);
        assert_eq!(v.per_test.iter().map(TestResult::passed).collect::<Vec<_>>(), vec![true, false, true]);
        assert_eq!(v.avg_runtime, None);
    }

    #[test]
    fn timeout_beats_error_beats_wrong() {
        let p = problem(&[("0", "9"), ("1", "1"), ("2", "2")], 200);
        let code = "if (in0 == 0) { print(1 / in0); } if (in0 == 1) { while (1 < 2) { } } print(in0 + 1);";
        let v = evaluate_code(code, &p, &Backend::Minilang);
        assert_eq!(v.per_test[0].status, TestStatus::Error);
        assert_eq!(v.per_test[1].status, TestStatus::Timeout);
        assert_eq!(v.per_test[2].status, TestStatus::WrongOutput);
        assert_eq!(v.status, VerdictStatus::Timeout);
    }

    #[test]
    fn syntax_error_is_error_verdict() {
        let p = problem(&[("1", "1")], 10);
        assert_eq!(evaluate_code("print(", &p, &Backend::Minilang).status, VerdictStatus::Error);
    }

    #[test]
    fn trailing_whitespace_only() {
        assert!(outputs_match("1\n2  \n\n", "1\n2"));
        assert!(!outputs_match("1 2", "1\n2"));
        assert!(!outputs_match(" 1", "1"));
    }

    #[test]
    fn speedup_cases() {
        assert_eq!(speedup(10.0, 2.0).unwrap(), 5.0);
        assert_eq!(speedup(4.0, 4.0).unwrap(), 1.0);
        assert!(speedup(3.0, 0.0).is_err());
    }
}
