//! Generator for the bundled toy corpus: small arithmetic tasks in minilang,
//! each with closed-form (fast) and loop-based (slow) correct solutions and
//! one subtly wrong submission.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::types::{Corpus, Label, Problem, Solution, Source, TestCase, Variant};
use crate::minilang;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyConfig {
    pub problems: usize,
    /// Share of problems emitted as synthetic fast/slow pairs without tests.
    pub synthetic_percent: usize,
    pub tests_per_problem: usize,
    pub step_limit: u64,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self { problems: 300, synthetic_percent: 20, tests_per_problem: 3, step_limit: 20_000, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToyTask {
    ScaledSum,
    Product,
    CountMultiples,
    Remainder,
    Quotient,
    ScaledSquares,
}

impl ToyTask {
    pub const ALL: [ToyTask; 6] =
        [ToyTask::ScaledSum, ToyTask::Product, ToyTask::CountMultiples, ToyTask::Remainder, ToyTask::Quotient, ToyTask::ScaledSquares];

    pub fn statements(self, c: i64) -> [String; 3] {
        match self {
            ToyTask::ScaledSum => [
                format!("Print the sum of {c}*i for i from 1 to in0."),
                format!("Add up {c} times each number from 1 to in0 and print it."),
                format!("Output {c}*1 + {c}*2 + ... + {c}*in0."),
            ],
            ToyTask::Product => [
                format!("Print in0 times {c}."),
                format!("Output the product of in0 and {c}."),
                format!("Multiply in0 by {c} and print the result."),
            ],
            ToyTask::CountMultiples => [
                format!("Count the multiples of {c} between 1 and in0."),
                format!("How many numbers from 1 to in0 are divisible by {c}? Print it."),
                format!("Print the number of i in 1..in0 with i % {c} == 0."),
            ],
            ToyTask::Remainder => [
                format!("Print in0 modulo {c}."),
                format!("Output the remainder of in0 divided by {c}."),
                format!("Print what is left after removing all full groups of {c} from in0."),
            ],
            ToyTask::Quotient => [
                format!("Print in0 divided by {c}, rounded down."),
                format!("Output how many full groups of {c} fit in in0."),
                format!("Print the integer quotient of in0 and {c}."),
            ],
            ToyTask::ScaledSquares => [
                format!("Print the sum of {c}*i*i for i from 1 to in0."),
                format!("Add up {c} times the square of each number from 1 to in0."),
                format!("Output {c}*1*1 + {c}*2*2 + ... + {c}*in0*in0."),
            ],
        }
    }

    /// Correct programs, roughly fastest first.
    pub fn correct(self, c: i64) -> Vec<String> {
        match self {
            ToyTask::ScaledSum => vec![
                format!("print({c} * in0 * (in0 + 1) / 2);"),
                format!("n = in0; print(n * (n + 1) / 2 * {c});"),
                format!("s = 0; i = 1; while (i <= in0) {{ s = s + {c} * i; i = i + 1; }} print(s);"),
                format!("s = 0; i = in0; while (i > 0) {{ s = s + i * {c}; i = i - 1; }} print(s);"),
                format!("s = 0; i = 1; while (i <= in0) {{ j = 0; while (j < {c}) {{ s = s + i; j = j + 1; }} i = i + 1; }} print(s);"),
            ],
            ToyTask::Product => vec![
                format!("print(in0 * {c});"),
                format!("print({c} * in0);"),
                format!("s = 0; i = 0; while (i < {c}) {{ s = s + in0; i = i + 1; }} print(s);"),
                format!("s = 0; i = 0; while (i < in0) {{ s = s + {c}; i = i + 1; }} print(s);"),
                format!("s = 0; i = 0; while (i < in0) {{ j = 0; while (j < {c}) {{ s = s + 1; j = j + 1; }} i = i + 1; }} print(s);"),
            ],
            ToyTask::CountMultiples => vec![
                format!("print(in0 / {c});"),
                format!("print((in0 - in0 % {c}) / {c});"),
                format!("k = 0; i = {c}; while (i <= in0) {{ k = k + 1; i = i + {c}; }} print(k);"),
                format!("k = 0; i = 1; while (i <= in0) {{ if (i % {c} == 0) {{ k = k + 1; }} i = i + 1; }} print(k);"),
            ],
            ToyTask::Remainder => vec![
                format!("print(in0 % {c});"),
                format!("print(in0 - in0 / {c} * {c});"),
                format!("r = in0; while (r >= {c}) {{ r = r - {c}; }} print(r);"),
                format!("r = 0; i = 0; while (i < in0) {{ r = r + 1; if (r == {c}) {{ r = 0; }} i = i + 1; }} print(r);"),
            ],
            ToyTask::Quotient => vec![
                format!("print(in0 / {c});"),
                format!("print((in0 - in0 % {c}) / {c});"),
                format!("q = 0; r = in0; while (r >= {c}) {{ r = r - {c}; q = q + 1; }} print(q);"),
                format!("q = 0; i = 1; while (i <= in0) {{ if (i % {c} == 0) {{ q = q + 1; }} i = i + 1; }} print(q);"),
            ],
            ToyTask::ScaledSquares => vec![
                format!("print({c} * in0 * (in0 + 1) * (2 * in0 + 1) / 6);"),
                format!("n = in0; print(n * (n + 1) * (2 * n + 1) / 6 * {c});"),
                format!("s = 0; i = 1; while (i <= in0) {{ s = s + {c} * i * i; i = i + 1; }} print(s);"),
                format!("s = 0; i = in0; while (i > 0) {{ s = s + i * i * {c}; i = i - 1; }} print(s);"),
            ],
        }
    }

    /// A plausible but wrong program (off-by-one or wrong operator).
    pub fn incorrect(self, c: i64) -> String {
        match self {
            ToyTask::ScaledSum => format!("s = 0; i = 1; while (i < in0) {{ s = s + {c} * i; i = i + 1; }} print(s);"),
            ToyTask::Product => format!("print(in0 + {c});"),
            ToyTask::CountMultiples => format!("print(in0 / {c} + 1);"),
            ToyTask::Remainder => format!("print((in0 + 1) % {c});"),
            ToyTask::Quotient => format!("print(in0 / {c} - 1);"),
            ToyTask::ScaledSquares => format!("print({c} * in0 * (in0 + 1) / 2);"),
        }
    }

    fn input_range(self, c: i64) -> (i64, i64) {
        match self {
            ToyTask::ScaledSum | ToyTask::Product | ToyTask::ScaledSquares => (3, 30),
            _ => (c + 1, 40),
        }
    }
}

fn expected(code: &str, input: i64, step_limit: u64) -> String {
    let program = minilang::parse(code).expect("toy programs parse");
    let out = minilang::run(&program, &[input], step_limit);
    assert_eq!(out.status, minilang::ExecStatus::Ok, "toy reference failed on {input}: {code}");
    minilang::format_values(&out.outputs)
}

/// Builds the toy corpus. Every `(task, constant, phrasing)` triple is used
/// at most once; `cfg.problems` is capped at the number of such triples.
pub fn toy_corpus(cfg: &ToyConfig) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut combos: Vec<(ToyTask, i64, usize)> = ToyTask::ALL
        .iter()
        .flat_map(|&t| (2..=20).flat_map(move |c| (0..3).map(move |k| (t, c, k))))
        .collect();
    combos.shuffle(&mut rng);
    combos.truncate(cfg.problems);
    let n_synth = combos.len() * cfg.synthetic_percent / 100;
    let mut corpus = Corpus::default();
    for (i, &(task, c, phrasing)) in combos.iter().enumerate() {
        let id = format!("toy{i:04}");
        let statement = task.statements(c)[phrasing].clone();
        let correct = task.correct(c);
        if i < n_synth {
            corpus.problems.push(Problem {
                id: id.clone(),
                statement,
                tests: Vec::new(),
                step_limit: cfg.step_limit,
                source: Source::Synthetic,
                median_runtime: None,
            });
            let fast = correct[rng.gen_range(0..2)].clone();
            let slow = correct[rng.gen_range(2..correct.len())].clone();
            for (code, v, tag) in [(fast, Variant::Fast, "fast"), (slow, Variant::Slow, "slow")] {
                corpus.solutions.push(Solution {
                    problem_id: id.clone(),
                    submission_id: format!("{id}-{tag}"),
                    code,
                    label: Label::Unverified,
                    runtime: None,
                    variant: Some(v),
                });
            }
            continue;
        }
        let (lo, hi) = task.input_range(c);
        let tests = (0..cfg.tests_per_problem)
            .map(|_| {
                let x = rng.gen_range(lo..=hi);
                TestCase { input: x.to_string(), output: expected(&correct[0], x, cfg.step_limit) }
            })
            .collect();
        corpus.problems.push(Problem {
            id: id.clone(),
            statement,
            tests,
            step_limit: cfg.step_limit,
            source: Source::Contest,
            median_runtime: None,
        });
        let mut codes: Vec<String> = correct;
        codes.push(task.incorrect(c));
        let wrong = codes.len() - 1;
        let mut order: Vec<usize> = (0..codes.len()).collect();
        order.shuffle(&mut rng);
        for (j, k) in order.into_iter().enumerate() {
            corpus.solutions.push(Solution {
                problem_id: id.clone(),
                submission_id: format!("{id}-s{j}"),
                code: codes[k].clone(),
                // every fifth problem carries a stale upstream "accepted" on its wrong answer
                label: if k == wrong && i % 5 == 0 { Label::Correct } else { Label::Unverified },
                runtime: (k == wrong && i % 5 == 0).then_some(1.0),
                variant: None,
            });
        }
    }
    corpus
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::executor::{label_corpus, Backend};

    #[test]
    fn every_variant_behaves_as_declared() {
        for task in ToyTask::ALL {
            for c in 2..=20 {
                let (lo, hi) = task.input_range(c);
                for x in [lo, (lo + hi) / 2, hi] {
                    let want = expected(&task.correct(c)[0], x, 1_000_000);
                    for code in task.correct(c) {
                        assert_eq!(expected(&code, x, 1_000_000), want, "{task:?} {c} {x}: {code}");
                    }
                    let program = minilang::parse(&task.incorrect(c)).unwrap();
                    let out = minilang::run(&program, &[x], 1_000_000);
                    assert_ne!(minilang::format_values(&out.outputs), want, "{task:?} {c} {x}");
                }
            }
        }
    }

    #[test]
    fn labeled_toy_corpus_has_fast_and_slow() {
        let corpus = toy_corpus(&ToyConfig { problems: 40, ..Default::default() });
        assert_eq!(corpus.problems.len(), 40);
        let (labeled, report) = label_corpus(&corpus, &Backend::Minilang, 1);
        let stale = corpus.solutions.iter().filter(|s| s.label == Label::Correct).count();
        assert!(stale > 0);
        assert_eq!(report.relabeled().count(), stale);
        assert!(report.entries.iter().all(|e| e.notes.iter().all(|n| !n.contains("step limit"))));
        for p in labeled.problems.iter().filter(|p| p.source == Source::Contest) {
            let ranked = labeled.ranked_correct(&p.id);
            assert!(ranked.len() >= 4, "{}", p.id);
            assert!(!ranked[0].code.contains("while"));
            assert!(ranked.last().unwrap().code.contains("while"));
            assert_eq!(labeled.incorrect_of(&p.id).len(), 1);
            assert!(p.median_runtime.is_some());
        }
        for p in labeled.problems.iter().filter(|p| p.source == Source::Synthetic) {
            let (f, s) = labeled.synthetic_pair(&p.id).unwrap();
            assert!(!f.code.contains("while") && s.code.contains("while"));
        }
    }

    #[test]
    fn deterministic() {
        let cfg = ToyConfig::default();
        assert_eq!(toy_corpus(&cfg), toy_corpus(&cfg));
    }

    #[test]
    fn passes_corpus_validation() {
        let corpus = toy_corpus(&ToyConfig::default());
        let back = crate::corpus::parse_corpus(&crate::corpus::corpus_to_jsonl(&corpus)).unwrap();
        assert_eq!(back, corpus);
    }
}
