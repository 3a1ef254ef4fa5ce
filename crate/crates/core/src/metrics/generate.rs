//! Sampling a policy on evaluation problems and scoring the samples.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ProblemEval, SampleResult};
use crate::corpus::{extract_code, generate_instruction, optimize_instruction, Problem};
use crate::executor::{evaluate_code, Backend};
use crate::model::{encode_prompt, sample_with_rng, Checkpoint, ModelError, SampleConfig};
use crate::Scalar;

/// One evaluation prompt: either solve the problem, or improve `slow_code`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalTask {
    pub problem: Problem,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slow_code: Option<String>,
    /// Runtime that speedups are measured against.
    pub baseline: f64,
}

impl EvalTask {
    /// Generation task against the problem's median correct runtime.
    pub fn generate(problem: &Problem) -> Option<Self> {
        Some(Self { problem: problem.clone(), slow_code: None, baseline: problem.median_runtime? })
    }

    /// Optimisation task against the runtime of the supplied program.
    pub fn optimize(problem: &Problem, slow_code: &str, slow_runtime: f64) -> Self {
        Self { problem: problem.clone(), slow_code: Some(slow_code.to_string()), baseline: slow_runtime }
    }

    pub fn instruction(&self) -> String {
        match &self.slow_code {
            None => generate_instruction(&self.problem.statement),
            Some(code) => optimize_instruction(&self.problem.statement, code),
        }
    }
}

fn run_task<S: Scalar>(
    policy: &Checkpoint<S>,
    task: &EvalTask,
    index: usize,
    n: usize,
    backend: &Backend,
    cfg: &SampleConfig,
) -> Result<ProblemEval, ModelError> {
    let prompt = encode_prompt(&policy.tokenizer, &task.instruction())?;
    let mut samples = Vec::with_capacity(n);
    for j in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream((index * n + j) as u64);
        let completion = sample_with_rng(policy, &prompt, cfg, &mut rng)?;
        let code = extract_code(&policy.tokenizer.decode(&completion));
        let verdict = evaluate_code(&code, &task.problem, backend);
        samples.push(SampleResult {
            problem_id: task.problem.id.clone(),
            index: j + 1,
            correct: verdict.is_correct(),
            runtime: verdict.avg_runtime,
            processors: 1,
        });
    }
    Ok(ProblemEval { problem_id: task.problem.id.clone(), baseline: task.baseline, samples })
}

/// Draws `n` samples per task. Sample `j` of task `i` uses RNG stream
/// `i * n + j` of `cfg.seed`, so results do not depend on `workers`.
pub fn sample_tasks<S: Scalar>(
    policy: &Checkpoint<S>,
    tasks: &[EvalTask],
    n: usize,
    backend: &Backend,
    cfg: &SampleConfig,
    workers: usize,
) -> Result<Vec<ProblemEval>, ModelError> {
    let one = |(i, t): (usize, &EvalTask)| run_task(policy, t, i, n, backend, cfg);
    if workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| ModelError::Config(e.to_string()))?;
        pool.install(|| tasks.par_iter().enumerate().map(one).collect())
    } else {
        tasks.iter().enumerate().map(one).collect()
    }
}
