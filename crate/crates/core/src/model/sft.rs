//! Supervised fine-tuning on instruction/response pairs and perplexity.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::batch::accumulate;
use super::checkpoint::{Checkpoint, Role};
use super::graph::Graph;
use super::optim::{Adam, AdamConfig};
use super::params::Grads;
use super::tokenizer::{Tokenizer, BOS, EOS};
use super::transformer::{hidden_on_graph, token_logprobs_on_graph, Bound};
use super::ModelError;
use crate::corpus::{render_prompt, render_response, PromptRecord};
use crate::Scalar;

/// A tokenised training pair: loss is taken on `completion` only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftExample {
    pub prompt: Vec<usize>,
    pub completion: Vec<usize>,
}

impl SftExample {
    pub fn tokens(&self) -> Vec<usize> {
        let mut t = self.prompt.clone();
        t.extend_from_slice(&self.completion);
        t
    }
}

/// `[BOS] + prompt text` as model input.
pub fn encode_prompt(tok: &Tokenizer, instruction: &str) -> Result<Vec<usize>, ModelError> {
    let mut ids = vec![BOS];
    ids.extend(tok.encode(&render_prompt(instruction))?);
    Ok(ids)
}

/// Fenced code followed by EOS, the completion the model is trained to emit.
pub fn encode_completion(tok: &Tokenizer, code: &str) -> Result<Vec<usize>, ModelError> {
    let mut ids = tok.encode(&render_response(code))?;
    ids.push(EOS);
    Ok(ids)
}

pub fn encode_record(tok: &Tokenizer, record: &PromptRecord) -> Result<SftExample, ModelError> {
    Ok(SftExample { prompt: encode_prompt(tok, &record.instruction)?, completion: encode_completion(tok, &record.response)? })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SftConfig {
    pub adam: AdamConfig,
    pub epochs: usize,
    pub batch_size: usize,
    /// Stop after this many optimiser steps even mid-epoch.
    pub max_steps: Option<usize>,
    pub seed: u64,
    /// Threads for per-example gradients; results are identical for any value.
    pub workers: usize,
}

impl Default for SftConfig {
    fn default() -> Self {
        Self { adam: AdamConfig::default(), epochs: 3, batch_size: 8, max_steps: None, seed: 0, workers: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
}

/// Summed completion NLL of one example and its gradient scaled by `weight`.
pub fn example_nll_grads<S: Scalar>(ckpt: &Checkpoint<S>, ex: &SftExample, weight: S) -> Result<(S, Grads<S>), ModelError> {
    let tokens = ex.tokens();
    let mut g = Graph::new();
    let bound = Bound::trainable(&mut g, &ckpt.params);
    let hidden = hidden_on_graph(&mut g, &ckpt.config, &ckpt.params, &bound, &tokens)?;
    let lp = token_logprobs_on_graph(&mut g, &ckpt.params, &bound, hidden, &tokens, ex.prompt.len());
    let total = g.sum(lp);
    let loss = g.scale(total, -weight);
    g.backward(loss);
    let nll = -g.value(total).item();
    Ok((nll, bound.grads(&mut g)))
}

/// Mean completion cross-entropy over a batch and its gradient. Per-example
/// gradients are summed in input order, so the result does not depend on `workers`.
pub fn batch_loss_grads<S: Scalar>(
    ckpt: &Checkpoint<S>,
    batch: &[SftExample],
    workers: usize,
) -> Result<(S, Grads<S>), ModelError> {
    let tokens: usize = batch.iter().map(|e| e.completion.len()).sum();
    if tokens == 0 {
        return Err(ModelError::EmptyInput);
    }
    let weight = S::one() / S::lit(tokens as f64);
    let (nll, grads) = accumulate(&ckpt.params, batch, workers, |ex| example_nll_grads(ckpt, ex, weight))?;
    Ok((nll * weight, grads))
}

/// Mean per-token completion NLL without a tape.
pub fn mean_completion_nll<S: Scalar>(ckpt: &Checkpoint<S>, examples: &[SftExample]) -> Result<S, ModelError> {
    let mut total = S::zero();
    let mut count = 0usize;
    for ex in examples {
        let lps = ckpt.token_logprobs(&ex.prompt, &ex.completion)?;
        count += lps.len();
        total -= lps.into_iter().sum::<S>();
    }
    if count == 0 {
        return Err(ModelError::EmptyInput);
    }
    Ok(total / S::lit(count as f64))
}

/// Fine-tunes on prompt records; instruction tokens are masked from the loss.
pub fn sft_train<S: Scalar>(
    ckpt: &Checkpoint<S>,
    records: &[PromptRecord],
    cfg: &SftConfig,
) -> Result<(Checkpoint<S>, Vec<LossRow>), ModelError> {
    let examples = records.iter().map(|r| encode_record(&ckpt.tokenizer, r)).collect::<Result<Vec<_>, _>>()?;
    sft_train_examples(ckpt, &examples, cfg)
}

pub fn sft_train_examples<S: Scalar>(
    ckpt: &Checkpoint<S>,
    examples: &[SftExample],
    cfg: &SftConfig,
) -> Result<(Checkpoint<S>, Vec<LossRow>), ModelError> {
    if examples.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    let mut model = ckpt.clone().with_role(Role::Sft);
    let mut opt = Adam::new(cfg.adam, &model.params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut history = Vec::new();
    let batch_size = cfg.batch_size.max(1);
    let mut step = 0usize;
    'epochs: for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch_size) {
            if cfg.max_steps.is_some_and(|m| step >= m) {
                break 'epochs;
            }
            let batch: Vec<SftExample> = chunk.iter().map(|&i| examples[i].clone()).collect();
            let (loss, grads) = batch_loss_grads(&model, &batch, cfg.workers)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(ModelError::Diverged { step, what: "sft loss".to_string() });
            }
            opt.step(&mut model.params, &grads);
            history.push(LossRow { step, loss: loss.as_f64(), lr: cfg.adam.lr });
            step += 1;
        }
    }
    if let Some(name) = model.params.first_non_finite() {
        return Err(ModelError::NonFinite(name.to_string()));
    }
    Ok((model, history))
}

/// `exp` of the mean per-token negative log-likelihood.
pub fn perplexity_from_nll(mean_nll: f64) -> f64 {
    mean_nll.exp()
}

/// Perplexity over every predicted position (tokens `1..`) of each sequence.
pub fn perplexity<S: Scalar>(ckpt: &Checkpoint<S>, dataset: &[Vec<usize>]) -> Result<f64, ModelError> {
    let mut total = 0.0f64;
    let mut count = 0usize;
    for seq in dataset {
        if seq.len() < 2 {
            continue;
        }
        let lps = ckpt.token_logprobs(&seq[..1], &seq[1..])?;
        count += lps.len();
        total -= lps.iter().map(|v| v.as_f64()).sum::<f64>();
    }
    if count == 0 {
        return Err(ModelError::EmptyInput);
    }
    Ok(perplexity_from_nll(total / count as f64))
}

/// Perplexity over completion tokens only, matching the SFT loss mask.
pub fn completion_perplexity<S: Scalar>(ckpt: &Checkpoint<S>, examples: &[SftExample]) -> Result<f64, ModelError> {
    Ok(perplexity_from_nll(mean_completion_nll(ckpt, examples)?.as_f64()))
}
