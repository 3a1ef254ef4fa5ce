use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::process::Prepared;
use super::{run_minilang_test, Backend, TestResult, Verdict, VerdictStatus};
use crate::corpus::{Corpus, Label, Problem, Source};
use crate::minilang::{self, Program};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemStats {
    pub problem_id: String,
    /// Runtimes of correct solutions, ascending.
    pub runtimes: Vec<f64>,
    pub median_runtime: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub problem_id: String,
    pub submission_id: String,
    pub before: Label,
    pub after: Label,
    pub status: VerdictStatus,
    pub runtime: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelReport {
    /// One entry per evaluated solution, ordered by (problem_id, submission_id).
    pub entries: Vec<LabelEntry>,
    pub stats: Vec<ProblemStats>,
}

impl LabelReport {
    pub fn relabeled(&self) -> impl Iterator<Item = &LabelEntry> {
        self.entries.iter().filter(|e| e.before == Label::Correct && e.after == Label::Incorrect)
    }
}

/// Median of a multiset; the mean of the two central values for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

enum Ready {
    Mini(Program),
    Proc(Prepared),
    Failed(super::TestStatus, String),
}

fn prepare(backend: &Backend, code: &str) -> Ready {
    match backend {
        Backend::Minilang => match minilang::parse(code) {
            Ok(p) => Ready::Mini(p),
            Err(e) => Ready::Failed(super::TestStatus::Error, e.to_string()),
        },
        Backend::Process(cfg) => match Prepared::new(cfg, code) {
            Ok(p) => Ready::Proc(p),
            Err((status, note)) => Ready::Failed(status, note),
        },
    }
}

fn run_job(backend: &Backend, ready: &Ready, problem: &Problem, test: usize) -> TestResult {
    match (ready, backend) {
        (Ready::Mini(p), _) => run_minilang_test(p, problem, test),
        (Ready::Proc(p), Backend::Process(cfg)) => p.run_test(cfg, problem, test),
        (Ready::Failed(status, note), _) => TestResult { status: *status, runtime: 0.0, note: Some(note.clone()) },
        (Ready::Proc(_), Backend::Minilang) => unreachable!("prepared for another backend"),
    }
}

fn in_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build() {
        Ok(pool) => pool.install(f),
        Err(e) => {
            log::warn!("falling back to the global pool: {e}");
            f()
        }
    }
}

/// Executes every contest solution not already marked incorrect, labels it,
/// fills runtimes and per-problem medians. Synthetic problems are left alone.
pub fn label_corpus(corpus: &Corpus, backend: &Backend, workers: usize) -> (Corpus, LabelReport) {
    let problems = corpus.problem_index();
    let eligible: Vec<usize> = corpus
        .solutions
        .iter()
        .enumerate()
        .filter(|(_, s)| {
            s.label != Label::Incorrect
                && problems.get(s.problem_id.as_str()).is_some_and(|p| p.source == Source::Contest && !p.tests.is_empty())
        })
        .map(|(i, _)| i)
        .collect();

    let (readies, results): (Vec<Ready>, Vec<TestResult>) = in_pool(workers, || {
        let readies: Vec<Ready> = eligible.par_iter().map(|&i| prepare(backend, &corpus.solutions[i].code)).collect();
        let jobs: Vec<(usize, usize)> = eligible
            .iter()
            .enumerate()
            .flat_map(|(k, &i)| (0..problems[corpus.solutions[i].problem_id.as_str()].tests.len()).map(move |t| (k, t)))
            .collect();
        let results = jobs
            .par_iter()
            .map(|&(k, t)| run_job(backend, &readies[k], problems[corpus.solutions[eligible[k]].problem_id.as_str()], t))
            .collect();
        (readies, results)
    });
    drop(readies);

    let mut out = corpus.clone();
    let mut entries = Vec::with_capacity(eligible.len());
    let mut cursor = 0;
    for &i in &eligible {
        let sol = &mut out.solutions[i];
        let n = problems[sol.problem_id.as_str()].tests.len();
        let verdict = Verdict::from_tests(results[cursor..cursor + n].to_vec());
        cursor += n;
        let before = sol.label;
        if verdict.infra_failure() {
            log::warn!("{}/{}: backend failure, label left unchanged", sol.problem_id, sol.submission_id);
        } else if verdict.is_correct() {
            sol.label = Label::Correct;
            sol.runtime = verdict.avg_runtime;
        } else {
            sol.label = Label::Incorrect;
            sol.runtime = None;
        }
        entries.push(LabelEntry {
            problem_id: sol.problem_id.clone(),
            submission_id: sol.submission_id.clone(),
            before,
            after: sol.label,
            status: verdict.status,
            runtime: sol.runtime,
            notes: verdict.notes(),
        });
    }
    entries.sort_by(|a, b| (&a.problem_id, &a.submission_id).cmp(&(&b.problem_id, &b.submission_id)));

    let mut runtimes: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for s in out.solutions.iter().filter(|s| s.is_correct()) {
        runtimes.entry(s.problem_id.as_str()).or_default().push(s.runtime.unwrap_or_default());
    }
    let mut stats = Vec::new();
    let mut medians = BTreeMap::new();
    for p in out.problems.iter().filter(|p| p.source == Source::Contest) {
        let mut rs = runtimes.get(p.id.as_str()).cloned().unwrap_or_default();
        rs.sort_by(f64::total_cmp);
        let m = median(&rs);
        medians.insert(p.id.clone(), m);
        stats.push(ProblemStats { problem_id: p.id.clone(), runtimes: rs, median_runtime: m });
    }
    for p in &mut out.problems {
        if let Some(m) = medians.get(&p.id) {
            p.median_runtime = *m;
        }
    }
    (out, LabelReport { entries, stats })
}
