//! Alignment trainers: RLPF (PPO against the SFT reference) and DPA
//! (margin-augmented direct preference loss).

mod dpa;
mod ppo;

use crate::corpus::generate_instruction;
use crate::model::transformer::{hidden_on_graph, token_logprobs_on_graph};
use crate::model::{encode_completion, encode_prompt, Bound, Checkpoint, Graph, ModelError, Var};
use crate::reward::RewardError;
use crate::Scalar;

pub use dpa::{dpa_accuracy, dpa_loss, dpa_loss_on_graph, dpa_train, DpaConfig, DpaLogRow, EncodedPair};
pub use ppo::{
    gae, ppo_loss_on_graph, ppo_step, rlpf_train, rollout, whiten, PpoConfig, PpoStats, RlpfConfig, RlpfLogRow, RlpfOutput,
    RolloutBatch, RolloutSample, TokenTrace, VALUE_HEAD,
};

#[derive(Debug, thiserror::Error)]
pub enum AlignError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Reward(#[from] RewardError),
}

/// Mean of `policy - reference` over sampled tokens: a single-sample estimate
/// of KL(policy ‖ reference).
pub fn kl_estimate(policy_logprobs: &[f64], ref_logprobs: &[f64]) -> Result<f64, AlignError> {
    if policy_logprobs.len() != ref_logprobs.len() {
        return Err(AlignError::LengthMismatch(policy_logprobs.len(), ref_logprobs.len()));
    }
    if policy_logprobs.is_empty() {
        return Err(AlignError::Domain("no tokens".to_string()));
    }
    let total: f64 = policy_logprobs.iter().zip(ref_logprobs).map(|(p, r)| p - r).sum();
    Ok(total / policy_logprobs.len() as f64)
}

pub fn clip_ratio(ratio: f64, eps: f64) -> f64 {
    ratio.clamp(1.0 - eps, 1.0 + eps)
}

/// Prompt tokens a policy is conditioned on when asked to solve `statement`.
pub fn policy_prompt<S: Scalar>(ckpt: &Checkpoint<S>, statement: &str) -> Result<Vec<usize>, ModelError> {
    encode_prompt(&ckpt.tokenizer, &generate_instruction(statement))
}

/// Encoded `(prompt, completion)` for a code answer to `statement`.
pub fn encode_answer<S: Scalar>(ckpt: &Checkpoint<S>, statement: &str, code: &str) -> Result<(Vec<usize>, Vec<usize>), ModelError> {
    Ok((policy_prompt(ckpt, statement)?, encode_completion(&ckpt.tokenizer, code)?))
}

/// Summed completion log-probability on the tape: `1 x 1`.
pub fn completion_logprob_on_graph<S: Scalar>(
    g: &mut Graph<S>,
    ckpt: &Checkpoint<S>,
    bound: &Bound,
    prompt: &[usize],
    completion: &[usize],
) -> Result<Var, ModelError> {
    let mut tokens = prompt.to_vec();
    tokens.extend_from_slice(completion);
    let hidden = hidden_on_graph(g, &ckpt.config, &ckpt.params, bound, &tokens)?;
    let lp = token_logprobs_on_graph(g, &ckpt.params, bound, hidden, &tokens, prompt.len());
    Ok(g.sum(lp))
}
