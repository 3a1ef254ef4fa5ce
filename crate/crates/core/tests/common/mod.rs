#![allow(dead_code)]

use perfalign::corpus::{Label, Problem, Solution, Source, TestCase, Triplet};
use perfalign::executor::VerdictStatus;
use perfalign::model::{Checkpoint, InitOptions, ModelConfig, Tokenizer};

pub fn model(layers: usize, width: usize, context: usize, seed: u64) -> Checkpoint<f64> {
    let tok = Tokenizer::new();
    let cfg = ModelConfig { layers, heads: 2, width, context, vocab_size: tok.vocab_size() };
    Checkpoint::init(cfg, tok, InitOptions { std: 0.1, zero_head: false }, seed).unwrap()
}

pub fn uniform_model(seed: u64) -> Checkpoint<f64> {
    let tok = Tokenizer::new();
    let cfg = ModelConfig { layers: 1, heads: 2, width: 8, context: 64, vocab_size: tok.vocab_size() };
    Checkpoint::init(cfg, tok, InitOptions::default(), seed).unwrap()
}

/// "Print twice the input", two tests, step limit 2000.
pub fn doubling_problem() -> Problem {
    Problem {
        id: "double".into(),
        statement: "Print in0 times 2.".into(),
        tests: vec![
            TestCase { input: "3".into(), output: "6\n".into() },
            TestCase { input: "5".into(), output: "10".into() },
        ],
        step_limit: 2000,
        source: Source::Contest,
        median_runtime: None,
    }
}

/// Twelve programs for `doubling_problem` with their expected verdicts.
pub fn verdict_fixtures() -> Vec<(&'static str, VerdictStatus)> {
    use VerdictStatus::*;
    vec![
        ("print(in0 * 2);", Correct),
        ("print(in0 + in0);", Correct),
        ("s = 0; i = 0; while (i < 2) { s = s + in0; i = i + 1; } print(s);", Correct),
        ("x = in0 * 2;\n\n  print(x);  \n", Correct),
        ("print(in0 * 3);", WrongOutput),
        ("print(in0 * 2); print(0);", WrongOutput),
        ("if (in0 == 3) { print(6); } else { print(0); }", WrongOutput),
        ("i = 0; while (i >= 0) { i = i + 1; }", Timeout),
        ("s = 0; i = 0; while (i < in0 * 1000) { s = s + 1; i = i + 1; } print(s);", Timeout),
        ("print(in0 / (in0 - in0));", Error),
        ("print(in0 * );", Error),
        ("print(y);", Error),
    ]
}

pub fn solution(problem: &str, id: &str, code: &str, runtime: Option<f64>) -> Solution {
    Solution {
        problem_id: problem.into(),
        submission_id: id.into(),
        code: code.into(),
        label: if runtime.is_some() { Label::Correct } else { Label::Unverified },
        runtime,
        variant: None,
    }
}

pub fn triplet(statement: &str, fast: &str, slow: &str, runtimes: Option<(f64, f64)>) -> Triplet {
    Triplet {
        problem_id: "p".into(),
        statement: statement.into(),
        fast: solution("p", "f", fast, runtimes.map(|r| r.0)),
        slow: solution("p", "s", slow, runtimes.map(|r| r.1)),
        slow_is_incorrect: false,
        has_runtimes: runtimes.is_some(),
    }
}
