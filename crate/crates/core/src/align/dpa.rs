use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{completion_logprob_on_graph, encode_answer, AlignError};
use crate::corpus::Triplet;
use crate::model::{accumulate, Adam, AdamConfig, Bound, Checkpoint, Graph, Grads, ModelError, Role, Var};
use crate::reward::{margin, MarginConfig};
use crate::Scalar;

/// `-log σ(β(πf − ref_f) − β(πs − ref_s) − mu)`.
pub fn dpa_loss<S: Scalar>(policy_fast: S, ref_fast: S, policy_slow: S, ref_slow: S, mu: S, beta: S) -> S {
    let z = beta * (policy_fast - ref_fast) - beta * (policy_slow - ref_slow) - mu;
    crate::softplus(-z)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpaConfig {
    pub adam: AdamConfig,
    pub beta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub shuffle: bool,
    pub margin: MarginConfig,
    pub seed: u64,
    pub workers: usize,
}

impl Default for DpaConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::with_lr(1e-7),
            beta: 0.6,
            epochs: 1,
            batch_size: 8,
            shuffle: true,
            margin: MarginConfig::default(),
            seed: 0,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpaLogRow {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
}

/// A triplet tokenised for preference training, with frozen reference log-probs.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedPair<S> {
    pub prompt: Vec<usize>,
    pub fast: Vec<usize>,
    pub slow: Vec<usize>,
    pub ref_fast: S,
    pub ref_slow: S,
    pub mu: S,
}

impl<S: Scalar> EncodedPair<S> {
    pub fn new(reference: &Checkpoint<S>, t: &Triplet, mu: f64) -> Result<Self, ModelError> {
        let (prompt, fast) = encode_answer(reference, &t.statement, &t.fast.code)?;
        let (_, slow) = encode_answer(reference, &t.statement, &t.slow.code)?;
        let ref_fast = reference.sequence_logprob(&prompt, &fast)?;
        let ref_slow = reference.sequence_logprob(&prompt, &slow)?;
        Ok(Self { prompt, fast, slow, ref_fast, ref_slow, mu: S::lit(mu) })
    }
}

pub fn dpa_loss_on_graph<S: Scalar>(
    g: &mut Graph<S>,
    policy: &Checkpoint<S>,
    bound: &Bound,
    pair: &EncodedPair<S>,
    beta: S,
) -> Result<Var, ModelError> {
    let lf = completion_logprob_on_graph(g, policy, bound, &pair.prompt, &pair.fast)?;
    let ls = completion_logprob_on_graph(g, policy, bound, &pair.prompt, &pair.slow)?;
    // −z = β(ls − ref_s) − β(lf − ref_f) + mu
    let d = g.sub(ls, lf);
    let d = g.scale(d, beta);
    let neg_z = g.add_scalar(d, beta * (pair.ref_fast - pair.ref_slow) + pair.mu);
    Ok(g.softplus(neg_z))
}

fn pair_grads<S: Scalar>(policy: &Checkpoint<S>, pair: &EncodedPair<S>, beta: S, weight: S) -> Result<(S, Grads<S>), ModelError> {
    let mut g = Graph::new();
    let bound = Bound::trainable(&mut g, &policy.params);
    let loss = dpa_loss_on_graph(&mut g, policy, &bound, pair, beta)?;
    let scaled = g.scale(loss, weight);
    g.backward(scaled);
    Ok((g.value(loss).item() * weight, bound.grads(&mut g)))
}

/// Preference fine-tuning against a frozen copy of `sft`.
pub fn dpa_train<S: Scalar>(
    sft: &Checkpoint<S>,
    triplets: &[Triplet],
    cfg: &DpaConfig,
) -> Result<(Checkpoint<S>, Vec<DpaLogRow>), AlignError> {
    if triplets.is_empty() {
        return Err(AlignError::Domain("no training triplets".to_string()));
    }
    if !(cfg.beta >= 0.0) {
        return Err(AlignError::Domain(format!("beta must be >= 0, got {}", cfg.beta)));
    }
    let pairs = triplets
        .iter()
        .map(|t| Ok(EncodedPair::new(sft, t, margin(t, &cfg.margin)?)?))
        .collect::<Result<Vec<_>, AlignError>>()?;
    let mut policy = sft.clone().with_role(Role::Dpa);
    let mut opt = Adam::new(cfg.adam, &policy.params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let beta = S::lit(cfg.beta);
    let mut log = Vec::new();
    let mut step = 0;
    for _ in 0..cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let weight = S::one() / S::lit(chunk.len() as f64);
            let batch: Vec<&EncodedPair<S>> = chunk.iter().map(|&i| &pairs[i]).collect();
            let p = &policy;
            let (loss, grads) = accumulate(&p.params, &batch, cfg.workers, |pair| pair_grads(p, pair, beta, weight))?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(ModelError::Diverged { step, what: "dpa loss".to_string() }.into());
            }
            opt.step(&mut policy.params, &grads);
            log.push(DpaLogRow { step, loss: loss.as_f64(), lr: cfg.adam.lr });
            step += 1;
        }
    }
    if let Some(name) = policy.params.first_non_finite() {
        return Err(ModelError::NonFinite(name.to_string()).into());
    }
    Ok((policy, log))
}

/// Fraction of triplets whose fast log-ratio strictly exceeds the slow one.
pub fn dpa_accuracy<S: Scalar>(policy: &Checkpoint<S>, reference: &Checkpoint<S>, triplets: &[Triplet]) -> Result<f64, AlignError> {
    if triplets.is_empty() {
        return Err(AlignError::Domain("empty evaluation set".to_string()));
    }
    let mut wins = 0usize;
    for t in triplets {
        let (prompt, fast) = encode_answer(reference, &t.statement, &t.fast.code)?;
        let (_, slow) = encode_answer(reference, &t.statement, &t.slow.code)?;
        let rf = policy.sequence_logprob(&prompt, &fast)? - reference.sequence_logprob(&prompt, &fast)?;
        let rs = policy.sequence_logprob(&prompt, &slow)? - reference.sequence_logprob(&prompt, &slow)?;
        wins += usize::from(rf > rs);
    }
    Ok(wins as f64 / triplets.len() as f64)
}
