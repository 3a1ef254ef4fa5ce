//! Reward model, adaptive-margin ranking loss and the composite reward.

mod train;

use serde::{Deserialize, Serialize};

use crate::corpus::{Problem, Source, Triplet};
use crate::executor::{evaluate_code, Backend, VerdictStatus};
use crate::model::transformer::{ensure_scalar_head, hidden_on_graph, scalar_head_on_graph};
use crate::model::{Bound, Checkpoint, Graph, ModelError, Role, Var, BOS};
use crate::Scalar;

pub use train::{train_reward_model, RewardConfig, RewardLogRow};

pub const REWARD_HEAD: &str = "reward_head";
/// Version of the `(statement, code)` rendering fed to the reward model.
pub const REWARD_INPUT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum RewardError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0}")]
    Missing(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarginConfig {
    pub lambda_max: f64,
}

impl Default for MarginConfig {
    fn default() -> Self {
        Self { lambda_max: 3.0 }
    }
}

/// `min(λ, slow/fast)` for runtime-bearing contest pairs, 0 otherwise.
pub fn margin(t: &Triplet, cfg: &MarginConfig) -> Result<f64, RewardError> {
    if !(cfg.lambda_max > 0.0) {
        return Err(RewardError::Domain(format!("lambda_max must be positive, got {}", cfg.lambda_max)));
    }
    if !t.has_runtimes || t.slow_is_incorrect {
        return Ok(0.0);
    }
    match (t.fast.runtime, t.slow.runtime) {
        (Some(f), Some(s)) if f > 0.0 && s > 0.0 => Ok(cfg.lambda_max.min(s / f)),
        (f, s) => Err(RewardError::Domain(format!(
            "triplet for `{}` needs positive runtimes, got fast {f:?} slow {s:?}",
            t.problem_id
        ))),
    }
}

/// `-log σ(r_fast - r_slow - mu)`, via softplus.
pub fn reward_loss<S: Scalar>(r_fast: S, r_slow: S, mu: S) -> S {
    crate::softplus(-(r_fast - r_slow - mu))
}

pub fn render_reward_input(statement: &str, code: &str) -> String {
    format!("{statement}\n---\n{code}")
}

/// A checkpoint with a scalar head read at the last token.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardModel<S> {
    pub ckpt: Checkpoint<S>,
}

impl<S: Scalar> RewardModel<S> {
    /// Backbone copied from `base` with a zero-initialised head, so every score starts at 0.
    pub fn from_base(base: &Checkpoint<S>) -> Self {
        let mut ckpt = base.clone().with_role(Role::Reward);
        ensure_scalar_head(&mut ckpt.params, &ckpt.config, REWARD_HEAD);
        Self { ckpt }
    }

    pub fn from_checkpoint(ckpt: Checkpoint<S>) -> Result<Self, RewardError> {
        if ckpt.role != Role::Reward || !ckpt.params.contains(&format!("{REWARD_HEAD}.w")) {
            return Err(RewardError::Missing(format!("checkpoint with role {} is not a reward model", ckpt.role)));
        }
        Ok(Self { ckpt })
    }

    /// `[BOS] + rendered text`, keeping the last `context` tokens when too long.
    pub fn encode(&self, statement: &str, code: &str) -> Result<Vec<usize>, ModelError> {
        let mut ids = vec![BOS];
        ids.extend(self.ckpt.tokenizer.encode(&render_reward_input(statement, code))?);
        let ctx = self.ckpt.config.context;
        if ids.len() > ctx {
            ids.drain(..ids.len() - ctx);
        }
        Ok(ids)
    }

    pub fn score_tokens(&self, tokens: &[usize]) -> Result<S, ModelError> {
        let mut dec = self.ckpt.decoder();
        let mut h = Vec::new();
        for &t in tokens {
            h = dec.step(t)?;
        }
        if h.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        Ok(dec.scalar_head(&h, REWARD_HEAD))
    }

    pub fn score(&self, statement: &str, code: &str) -> Result<S, ModelError> {
        self.score_tokens(&self.encode(statement, code)?)
    }
}

/// Reward of a token sequence on the tape: `1 x 1`.
pub fn score_on_graph<S: Scalar>(g: &mut Graph<S>, ckpt: &Checkpoint<S>, bound: &Bound, tokens: &[usize]) -> Result<Var, ModelError> {
    let hidden = hidden_on_graph(g, &ckpt.config, &ckpt.params, bound, tokens)?;
    Ok(scalar_head_on_graph(g, &ckpt.params, bound, hidden, tokens.len() - 1, REWARD_HEAD))
}

/// Ranking loss of one encoded pair on the tape.
pub fn pair_loss_on_graph<S: Scalar>(
    g: &mut Graph<S>,
    ckpt: &Checkpoint<S>,
    bound: &Bound,
    fast: &[usize],
    slow: &[usize],
    mu: S,
) -> Result<Var, ModelError> {
    let rf = score_on_graph(g, ckpt, bound, fast)?;
    let rs = score_on_graph(g, ckpt, bound, slow)?;
    let d = g.sub(rs, rf);
    let d = g.add_scalar(d, mu);
    Ok(g.softplus(d))
}

/// Fraction of triplets scored strictly higher for the fast solution.
pub fn reward_accuracy<S: Scalar>(model: &RewardModel<S>, triplets: &[Triplet]) -> Result<f64, RewardError> {
    if triplets.is_empty() {
        return Err(RewardError::Domain("empty evaluation set".to_string()));
    }
    let mut wins = 0usize;
    for t in triplets {
        let rf = model.score(&t.statement, &t.fast.code)?;
        let rs = model.score(&t.statement, &t.slow.code)?;
        wins += usize::from(rf > rs);
    }
    Ok(wins as f64 / triplets.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardSource {
    Incorrect,
    Speedup,
    Model,
    InfraFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeReward {
    pub value: f64,
    pub source: RewardSource,
    /// Measured runtime when the code ran correctly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CompositeReward {
    fn penalty(source: RewardSource, note: Option<String>) -> Self {
        Self { value: -1.0, source, runtime: None, note }
    }
}

/// −1 for incorrect code, `median/runtime − 1` for correct code on labeled
/// contest problems, the reward model's score otherwise.
pub fn composite_reward<S: Scalar>(
    problem: &Problem,
    code: &str,
    backend: &Backend,
    reward_model: Option<&RewardModel<S>>,
) -> CompositeReward {
    if problem.source == Source::Contest && !problem.tests.is_empty() {
        let Some(median) = problem.median_runtime.filter(|m| *m > 0.0) else {
            return CompositeReward::penalty(RewardSource::InfraFailure, Some(format!("problem `{}` is not labeled", problem.id)));
        };
        let verdict = evaluate_code(code, problem, backend);
        if verdict.infra_failure() {
            return CompositeReward::penalty(RewardSource::InfraFailure, verdict.notes().into_iter().next());
        }
        return match (verdict.status, verdict.avg_runtime) {
            (VerdictStatus::Correct, Some(rt)) if rt > 0.0 => {
                CompositeReward { value: median / rt - 1.0, source: RewardSource::Speedup, runtime: Some(rt), note: None }
            }
            (VerdictStatus::Correct, _) => {
                CompositeReward::penalty(RewardSource::InfraFailure, Some("zero measured runtime".to_string()))
            }
            _ => CompositeReward::penalty(RewardSource::Incorrect, None),
        };
    }
    match reward_model {
        Some(m) => match m.score(&problem.statement, code) {
            Ok(v) => CompositeReward { value: v.as_f64(), source: RewardSource::Model, runtime: None, note: None },
            Err(e) => CompositeReward::penalty(RewardSource::InfraFailure, Some(format!("reward model: {e}"))),
        },
        None => CompositeReward::penalty(RewardSource::InfraFailure, Some("no reward model for an unlabeled problem".into())),
    }
}
