use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{kl_estimate, policy_prompt, AlignError};
use crate::corpus::{extract_code, Problem};
use crate::executor::Backend;
use crate::model::tensor::log_softmax;
use crate::model::transformer::{ensure_scalar_head, hidden_on_graph, token_logprobs_on_graph};
use crate::model::{
    sample_with_rng, Adam, AdamConfig, Bound, Checkpoint, Graph, Grads, ModelError, ParamStore, Role, SampleConfig, Tensor,
    Var,
};
use crate::reward::{composite_reward, RewardModel, RewardSource};
use crate::Scalar;

pub const VALUE_HEAD: &str = "value_head";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    /// Per-token KL penalty coefficient; fixed for the whole run.
    pub kl_coeff: f64,
    pub clip_eps: f64,
    pub gae_lambda: f64,
    pub gamma: f64,
    pub vf_coef: f64,
    /// Optimisation passes over each rollout batch.
    pub ppo_epochs: usize,
    pub whiten_advantages: bool,
    pub adam: AdamConfig,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            kl_coeff: 0.1,
            clip_eps: 0.2,
            gae_lambda: 0.95,
            gamma: 1.0,
            vf_coef: 0.1,
            ppo_epochs: 1,
            whiten_advantages: true,
            adam: AdamConfig::default(),
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), AlignError> {
        if !(self.kl_coeff >= 0.0) {
            return Err(AlignError::Domain(format!("kl_coeff must be >= 0, got {}", self.kl_coeff)));
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(AlignError::Domain(format!("clip_eps must be in (0, 1), got {}", self.clip_eps)));
        }
        Ok(())
    }
}

/// One sampled completion and everything PPO needs about it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutSample {
    pub problem_id: String,
    pub prompt: Vec<usize>,
    pub completion: Vec<usize>,
    /// Policy log-probabilities at sampling time.
    pub old_logprobs: Vec<f64>,
    pub ref_logprobs: Vec<f64>,
    pub values: Vec<f64>,
    pub reward: f64,
    pub reward_source: RewardSource,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutSample {
    /// Per-token rewards: `-η (log π − log π_ref)` everywhere plus the scalar reward on the last token.
    pub fn token_rewards(&self, kl_coeff: f64) -> Vec<f64> {
        let mut r: Vec<f64> =
            self.old_logprobs.iter().zip(&self.ref_logprobs).map(|(p, q)| -kl_coeff * (p - q)).collect();
        if let Some(last) = r.last_mut() {
            *last += self.reward;
        }
        r
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RolloutBatch {
    pub samples: Vec<RolloutSample>,
}

impl RolloutBatch {
    pub fn mean_reward(&self) -> f64 {
        self.samples.iter().map(|s| s.reward).sum::<f64>() / self.samples.len().max(1) as f64
    }

    /// Token-level KL estimate over the whole batch.
    pub fn kl(&self) -> Result<f64, AlignError> {
        let p: Vec<f64> = self.samples.iter().flat_map(|s| s.old_logprobs.iter().copied()).collect();
        let r: Vec<f64> = self.samples.iter().flat_map(|s| s.ref_logprobs.iter().copied()).collect();
        kl_estimate(&p, &r)
    }

    pub fn tokens(&self) -> usize {
        self.samples.iter().map(|s| s.completion.len()).sum()
    }

    /// Fills advantages and returns with GAE, then whitens advantages across the batch.
    pub fn compute_advantages(&mut self, cfg: &PpoConfig) {
        for s in &mut self.samples {
            let (adv, ret) = gae(&s.token_rewards(cfg.kl_coeff), &s.values, cfg.gamma, cfg.gae_lambda);
            s.advantages = adv;
            s.returns = ret;
        }
        if cfg.whiten_advantages {
            let mut all: Vec<f64> = self.samples.iter().flat_map(|s| s.advantages.iter().copied()).collect();
            whiten(&mut all);
            let mut it = all.into_iter();
            for s in &mut self.samples {
                for a in &mut s.advantages {
                    *a = it.next().expect("same token count");
                }
            }
        }
    }
}

/// Generalised advantage estimation with a zero bootstrap after the last token.
pub fn gae(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(rewards.len(), values.len());
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let next_value = if t + 1 < n { values[t + 1] } else { 0.0 };
        let delta = rewards[t] + gamma * next_value - values[t];
        next_adv = delta + gamma * lambda * next_adv;
        adv[t] = next_adv;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Shifts to zero mean and scales to unit (population) standard deviation.
pub fn whiten(xs: &mut [f64]) {
    if xs.is_empty() {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let scale = 1.0 / (var.sqrt() + 1e-8);
    for x in xs {
        *x = (*x - mean) * scale;
    }
}

/// Log-probabilities and value estimates for every completion token, without a tape.
fn policy_stats<S: Scalar>(ckpt: &Checkpoint<S>, prompt: &[usize], completion: &[usize], with_values: bool) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
    let mut dec = ckpt.decoder();
    let mut h = Vec::new();
    for &t in prompt {
        h = dec.step(t)?;
    }
    let mut lps = Vec::with_capacity(completion.len());
    let mut values = Vec::with_capacity(completion.len());
    for (i, &tok) in completion.iter().enumerate() {
        lps.push(log_softmax(&dec.logits(&h))[tok].as_f64());
        if with_values {
            values.push(dec.scalar_head(&h, VALUE_HEAD).as_f64());
        }
        if i + 1 < completion.len() {
            h = dec.step(tok)?;
        }
    }
    Ok((lps, values))
}

fn rollout_one<S: Scalar>(
    policy: &Checkpoint<S>,
    reference: &Checkpoint<S>,
    problem: &Problem,
    backend: &Backend,
    reward_model: Option<&RewardModel<S>>,
    sample_cfg: &SampleConfig,
    seed: u64,
    stream: u64,
) -> Result<RolloutSample, AlignError> {
    let prompt = policy_prompt(policy, &problem.statement)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let completion = sample_with_rng(policy, &prompt, sample_cfg, &mut rng)?;
    if completion.is_empty() {
        return Err(ModelError::Length { len: prompt.len() + 1, context: policy.config.context }.into());
    }
    let (old_logprobs, values) = policy_stats(policy, &prompt, &completion, true)?;
    let (ref_logprobs, _) = policy_stats(reference, &prompt, &completion, false)?;
    let code = extract_code(&policy.tokenizer.decode(&completion));
    let reward = composite_reward(problem, &code, backend, reward_model);
    if reward.source == RewardSource::InfraFailure {
        log::warn!("{}: reward infrastructure failure: {}", problem.id, reward.note.as_deref().unwrap_or("unknown"));
    }
    Ok(RolloutSample {
        problem_id: problem.id.clone(),
        prompt,
        completion,
        old_logprobs,
        ref_logprobs,
        values,
        reward: reward.value,
        reward_source: reward.source,
        advantages: Vec::new(),
        returns: Vec::new(),
    })
}

/// Samples one completion per problem and scores it. Sample `i` uses RNG
/// stream `i` of `seed`, so results do not depend on `workers`.
#[allow(clippy::too_many_arguments)]
pub fn rollout<S: Scalar>(
    policy: &Checkpoint<S>,
    reference: &Checkpoint<S>,
    problems: &[&Problem],
    backend: &Backend,
    reward_model: Option<&RewardModel<S>>,
    sample_cfg: &SampleConfig,
    seed: u64,
    workers: usize,
) -> Result<RolloutBatch, AlignError> {
    let one = |(i, p): (usize, &&Problem)| rollout_one(policy, reference, p, backend, reward_model, sample_cfg, seed, i as u64);
    let samples: Result<Vec<_>, _> = if workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| ModelError::Config(e.to_string()))?;
        pool.install(|| problems.par_iter().enumerate().map(one).collect())
    } else {
        problems.iter().enumerate().map(one).collect()
    };
    Ok(RolloutBatch { samples: samples? })
}

/// What the clipped objective saw at one token.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenTrace {
    pub ratio: f64,
    pub clipped_ratio: f64,
    pub advantage: f64,
    /// `min(ratio·A, clipped·A)`.
    pub objective: f64,
}

/// Clipped surrogate plus value loss for one sample, each scaled by `weight`.
/// Returns `(policy_loss, value_loss)`.
pub fn ppo_loss_on_graph<S: Scalar>(
    g: &mut Graph<S>,
    ckpt: &Checkpoint<S>,
    bound: &Bound,
    sample: &RolloutSample,
    cfg: &PpoConfig,
    weight: S,
) -> Result<(Var, Var), ModelError> {
    let n = sample.completion.len();
    let mut tokens = sample.prompt.clone();
    tokens.extend_from_slice(&sample.completion);
    let start = sample.prompt.len();
    let hidden = hidden_on_graph(g, &ckpt.config, &ckpt.params, bound, &tokens)?;
    let lp = token_logprobs_on_graph(g, &ckpt.params, bound, hidden, &tokens, start);
    let col = |v: &[f64]| Tensor::column(v.iter().map(|&x| S::lit(x)).collect());
    let old = g.constant(col(&sample.old_logprobs));
    let adv = g.constant(col(&sample.advantages));
    let log_ratio = g.sub(lp, old);
    let ratio = g.exp(log_ratio);
    let eps = S::lit(cfg.clip_eps);
    let clipped = g.clamp(ratio, S::one() - eps, S::one() + eps);
    let s1 = g.mul(ratio, adv);
    let s2 = g.mul(clipped, adv);
    let obj = g.min(s1, s2);
    let total = g.sum(obj);
    let policy_loss = g.scale(total, -weight);

    let rows = g.rows(hidden, start - 1, start - 1 + n);
    let w = g.matmul(rows, bound.var(&ckpt.params, &format!("{VALUE_HEAD}.w")));
    let values = g.add_row(w, bound.var(&ckpt.params, &format!("{VALUE_HEAD}.b")));
    let ret = g.constant(col(&sample.returns));
    let diff = g.sub(values, ret);
    let sq = g.mul(diff, diff);
    let vsum = g.sum(sq);
    let value_loss = g.scale(vsum, S::lit(0.5 * cfg.vf_coef) * weight);
    Ok((policy_loss, value_loss))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub clip_fraction: f64,
    /// Per-token records, filled only when tracing is requested.
    pub traces: Vec<TokenTrace>,
}

struct SampleOut<S> {
    policy_loss: S,
    value_loss: S,
    grads: Grads<S>,
    traces: Vec<TokenTrace>,
}

fn sample_grads<S: Scalar>(ckpt: &Checkpoint<S>, s: &RolloutSample, cfg: &PpoConfig, weight: S) -> Result<SampleOut<S>, ModelError> {
    let mut g = Graph::new();
    let bound = Bound::trainable(&mut g, &ckpt.params);
    let (pl, vl) = ppo_loss_on_graph(&mut g, ckpt, &bound, s, cfg, weight)?;
    let total = g.add(pl, vl);
    g.backward(total);
    let (policy_loss, value_loss) = (g.value(pl).item(), g.value(vl).item());
    Ok(SampleOut { policy_loss, value_loss, grads: bound.grads(&mut g), traces: Vec::new() })
}

fn traces_for<S: Scalar>(ckpt: &Checkpoint<S>, s: &RolloutSample, eps: f64) -> Result<Vec<TokenTrace>, ModelError> {
    let (lps, _) = policy_stats(ckpt, &s.prompt, &s.completion, false)?;
    Ok(lps
        .iter()
        .zip(&s.old_logprobs)
        .zip(&s.advantages)
        .map(|((&lp, &old), &a)| {
            let ratio = (lp - old).exp();
            let clipped_ratio = ratio.clamp(1.0 - eps, 1.0 + eps);
            TokenTrace { ratio, clipped_ratio, advantage: a, objective: (ratio * a).min(clipped_ratio * a) }
        })
        .collect())
}

/// One optimiser update on a scored rollout batch (advantages must be filled).
pub fn ppo_step<S: Scalar>(
    policy: &mut Checkpoint<S>,
    opt: &mut Adam<S>,
    batch: &RolloutBatch,
    cfg: &PpoConfig,
    workers: usize,
    trace: bool,
) -> Result<PpoStats, AlignError> {
    let tokens = batch.tokens();
    if tokens == 0 {
        return Err(AlignError::Domain("empty rollout batch".to_string()));
    }
    let weight = S::one() / S::lit(tokens as f64);
    let p = &*policy;
    let run = |s: &RolloutSample| -> Result<SampleOut<S>, ModelError> {
        let mut out = sample_grads(p, s, cfg, weight)?;
        if trace {
            out.traces = traces_for(p, s, cfg.clip_eps)?;
        }
        Ok(out)
    };
    let outs: Result<Vec<SampleOut<S>>, ModelError> = if workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| ModelError::Config(e.to_string()))?;
        pool.install(|| batch.samples.par_iter().map(run).collect())
    } else {
        batch.samples.iter().map(run).collect()
    };
    let mut grads = Grads::zeros_like(&policy.params);
    let mut stats = PpoStats::default();
    for o in outs? {
        stats.policy_loss += o.policy_loss.as_f64();
        stats.value_loss += o.value_loss.as_f64();
        grads.add_assign(&o.grads);
        stats.traces.extend(o.traces);
    }
    if !stats.policy_loss.is_finite() || !stats.value_loss.is_finite() {
        return Err(ModelError::NonFinite("ppo loss".to_string()).into());
    }
    if !grads.is_finite() {
        let name = grads
            .tensors
            .iter()
            .position(|t| !t.is_finite())
            .map_or("unknown", |i| policy.params.name(i))
            .to_string();
        return Err(ModelError::NonFinite(format!("gradient of {name}")).into());
    }
    if trace {
        let clipped = stats.traces.iter().filter(|t| t.ratio != t.clipped_ratio).count();
        stats.clip_fraction = clipped as f64 / stats.traces.len().max(1) as f64;
    }
    opt.step(&mut policy.params, &grads);
    if let Some(name) = policy.params.first_non_finite() {
        return Err(ModelError::NonFinite(name.to_string()).into());
    }
    Ok(stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RlpfConfig {
    pub ppo: PpoConfig,
    /// Passes over the problem set.
    pub epochs: usize,
    /// Prompts per rollout batch.
    pub batch_size: usize,
    /// Completions sampled per prompt in each batch.
    pub samples_per_prompt: usize,
    pub sample: SampleConfig,
    pub seed: u64,
    pub workers: usize,
}

impl Default for RlpfConfig {
    fn default() -> Self {
        Self {
            ppo: PpoConfig::default(),
            epochs: 4,
            batch_size: 8,
            samples_per_prompt: 1,
            sample: SampleConfig::rollout(0),
            seed: 0,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RlpfLogRow {
    pub epoch: usize,
    pub batch: usize,
    pub mean_reward: f64,
    pub kl_estimate: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RlpfOutput<S> {
    /// The trained policy, or the last good one when training aborted.
    pub ckpt: Checkpoint<S>,
    pub history: Vec<RlpfLogRow>,
    pub aborted: Option<String>,
}

impl<S> RlpfOutput<S> {
    /// Mean of per-batch mean rewards for each epoch.
    pub fn epoch_rewards(&self) -> Vec<f64> {
        let epochs = self.history.iter().map(|r| r.epoch + 1).max().unwrap_or(0);
        (0..epochs)
            .map(|e| {
                let rows: Vec<f64> = self.history.iter().filter(|r| r.epoch == e).map(|r| r.mean_reward).collect();
                rows.iter().sum::<f64>() / rows.len().max(1) as f64
            })
            .collect()
    }
}

fn strip_value_head<S: Scalar>(mut ckpt: Checkpoint<S>) -> Checkpoint<S> {
    let mut params = ParamStore::new();
    for (name, t) in ckpt.params.iter() {
        if !name.starts_with(&format!("{VALUE_HEAD}.")) {
            params.insert(name, t.clone());
        }
    }
    ckpt.params = params;
    ckpt.with_role(Role::Rlpf)
}

/// PPO fine-tuning of `sft` on `problems` with the composite reward and a KL
/// penalty towards `sft`.
pub fn rlpf_train<S: Scalar>(
    sft: &Checkpoint<S>,
    problems: &[Problem],
    backend: &Backend,
    reward_model: Option<&RewardModel<S>>,
    cfg: &RlpfConfig,
) -> Result<RlpfOutput<S>, AlignError> {
    cfg.ppo.validate()?;
    cfg.sample.validate()?;
    if problems.is_empty() {
        return Err(AlignError::Domain("no RL problems".to_string()));
    }
    let reference = sft;
    let mut policy = sft.clone();
    ensure_scalar_head(&mut policy.params, &policy.config, VALUE_HEAD);
    let mut opt = Adam::new(cfg.ppo.adam, &policy.params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..problems.len()).collect();
    let mut history = Vec::new();
    let mut last_good = policy.clone();
    let mut round = 0u64;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for (b, chunk) in order.chunks(cfg.batch_size.max(1)).enumerate() {
            let prompts: Vec<&Problem> =
                chunk.iter().flat_map(|&i| std::iter::repeat_n(&problems[i], cfg.samples_per_prompt.max(1))).collect();
            let seed = cfg.seed ^ round.wrapping_mul(0x9E37_79B9_7F4A_7C15);
            round += 1;
            let step = (|| -> Result<RlpfLogRow, AlignError> {
                let mut batch = rollout(&policy, reference, &prompts, backend, reward_model, &cfg.sample, seed, cfg.workers)?;
                batch.compute_advantages(&cfg.ppo);
                let mut loss = 0.0;
                for _ in 0..cfg.ppo.ppo_epochs.max(1) {
                    let stats = ppo_step(&mut policy, &mut opt, &batch, &cfg.ppo, cfg.workers, false)?;
                    loss = stats.policy_loss + stats.value_loss;
                }
                Ok(RlpfLogRow { epoch, batch: b, mean_reward: batch.mean_reward(), kl_estimate: batch.kl()?, loss })
            })();
            match step {
                Ok(row) => {
                    log::info!(
                        "rlpf epoch {epoch} batch {b}: reward {:.4} kl {:.4} loss {:.4}",
                        row.mean_reward,
                        row.kl_estimate,
                        row.loss
                    );
                    history.push(row);
                    last_good = policy.clone();
                }
                Err(AlignError::Model(e @ (ModelError::NonFinite(_) | ModelError::Diverged { .. }))) => {
                    return Ok(RlpfOutput { ckpt: strip_value_head(last_good), history, aborted: Some(e.to_string()) });
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(RlpfOutput { ckpt: strip_value_head(policy), history, aborted: None })
}
