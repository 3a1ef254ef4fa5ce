use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{margin, pair_loss_on_graph, reward_accuracy, MarginConfig, RewardError, RewardModel};
use crate::corpus::Triplet;
use crate::model::{accumulate, Adam, AdamConfig, Bound, Checkpoint, Graph, Grads, ModelError, Role};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub adam: AdamConfig,
    pub epochs: usize,
    pub batch_size: usize,
    /// Reshuffle triplets every epoch; off keeps input order.
    pub shuffle: bool,
    pub margin: MarginConfig,
    pub seed: u64,
    pub workers: usize,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
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
pub struct RewardLogRow {
    pub step: usize,
    pub loss: f64,
    /// Filled on the last step of each epoch when an eval set is given.
    pub eval_accuracy: Option<f64>,
}

struct Encoded<S> {
    fast: Vec<usize>,
    slow: Vec<usize>,
    mu: S,
}

fn pair_grads<S: Scalar>(ckpt: &Checkpoint<S>, e: &Encoded<S>, weight: S) -> Result<(S, Grads<S>), ModelError> {
    let mut g = Graph::new();
    let bound = Bound::trainable(&mut g, &ckpt.params);
    let loss = pair_loss_on_graph(&mut g, ckpt, &bound, &e.fast, &e.slow, e.mu)?;
    let scaled = g.scale(loss, weight);
    g.backward(scaled);
    Ok((g.value(loss).item() * weight, bound.grads(&mut g)))
}

/// Minimises the mean margin ranking loss over `triplets`. A base checkpoint
/// gets a fresh head; a reward checkpoint continues training.
pub fn train_reward_model<S: Scalar>(
    base: &Checkpoint<S>,
    triplets: &[Triplet],
    cfg: &RewardConfig,
    eval: &[Triplet],
) -> Result<(RewardModel<S>, Vec<RewardLogRow>), RewardError> {
    if triplets.is_empty() {
        return Err(RewardError::Domain("no training triplets".to_string()));
    }
    let mut model = if base.role == Role::Reward { RewardModel::from_checkpoint(base.clone())? } else { RewardModel::from_base(base) };
    let data = triplets
        .iter()
        .map(|t| {
            Ok(Encoded {
                fast: model.encode(&t.statement, &t.fast.code)?,
                slow: model.encode(&t.statement, &t.slow.code)?,
                mu: S::lit(margin(t, &cfg.margin)?),
            })
        })
        .collect::<Result<Vec<_>, RewardError>>()?;
    let mut opt = Adam::new(cfg.adam, &model.ckpt.params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = Vec::new();
    let mut step = 0;
    for _ in 0..cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let weight = S::one() / S::lit(chunk.len() as f64);
            let batch: Vec<&Encoded<S>> = chunk.iter().map(|&i| &data[i]).collect();
            let ckpt = &model.ckpt;
            let (loss, grads) = accumulate(&ckpt.params, &batch, cfg.workers, |e| pair_grads(ckpt, e, weight))?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(ModelError::Diverged { step, what: "reward loss".to_string() }.into());
            }
            opt.step(&mut model.ckpt.params, &grads);
            log.push(RewardLogRow { step, loss: loss.as_f64(), eval_accuracy: None });
            step += 1;
        }
        if !eval.is_empty() {
            let acc = reward_accuracy(&model, eval)?;
            if let Some(last) = log.last_mut() {
                last.eval_accuracy = Some(acc);
            }
        }
    }
    if let Some(name) = model.ckpt.params.first_non_finite() {
        return Err(ModelError::NonFinite(name.to_string()).into());
    }
    Ok((model, log))
}
