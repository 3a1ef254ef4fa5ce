use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::tensor::softmax_in_place;
use super::tokenizer::EOS;
use super::ModelError;
use crate::Scalar;

/// Decoding controls. `temperature == 0` means greedy argmax.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    pub temperature: f64,
    pub top_p: f64,
    /// 0 disables top-k truncation.
    pub top_k: usize,
    pub max_new_tokens: usize,
    pub seed: u64,
}

impl SampleConfig {
    /// Evaluation decoding: temperature 0.2, top-p 0.95.
    pub fn eval(seed: u64) -> Self {
        Self { temperature: 0.2, top_p: 0.95, top_k: 0, max_new_tokens: 96, seed }
    }

    /// Rollout decoding for RL: untruncated sampling (top-k 0, top-p 1.0).
    pub fn rollout(seed: u64) -> Self {
        Self { temperature: 1.0, top_p: 1.0, top_k: 0, max_new_tokens: 96, seed }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.temperature >= 0.0) || !self.temperature.is_finite() {
            return Err(ModelError::Config(format!("temperature must be >= 0, got {}", self.temperature)));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(ModelError::Config(format!("top_p must be in (0, 1], got {}", self.top_p)));
        }
        Ok(())
    }
}

/// Slack for comparing cumulative probability mass against `top_p`.
const MASS_TOLERANCE: f64 = 1e-12;

/// The truncated, renormalised next-token distribution as `(token, prob)`
/// pairs sorted by descending probability (ties by token id).
///
/// Logits are divided by the temperature, then top-k keeps the `k` most
/// likely tokens, then top-p keeps the shortest prefix whose mass reaches `p`.
pub fn truncated_distribution<S: Scalar>(logits: &[S], temperature: f64, top_k: usize, top_p: f64) -> Vec<(usize, S)> {
    if temperature == 0.0 {
        return vec![(argmax(logits), S::one())];
    }
    let t = S::lit(temperature);
    let mut probs: Vec<S> = logits.iter().map(|&l| l / t).collect();
    softmax_in_place(&mut probs);
    let mut order: Vec<(usize, S)> = probs.into_iter().enumerate().collect();
    order.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));
    if top_k > 0 && top_k < order.len() {
        order.truncate(top_k);
    }
    if top_p < 1.0 {
        let target = S::lit(top_p - MASS_TOLERANCE);
        let mut mass = S::zero();
        let mut keep = order.len();
        for (i, &(_, p)) in order.iter().enumerate() {
            mass += p;
            if mass >= target {
                keep = i + 1;
                break;
            }
        }
        order.truncate(keep);
    }
    let total: S = order.iter().map(|&(_, p)| p).sum();
    for entry in &mut order {
        entry.1 /= total;
    }
    order
}

/// Index of the largest score; the lowest index wins ties.
pub fn argmax<S: Scalar>(xs: &[S]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn draw<S: Scalar, R: Rng>(dist: &[(usize, S)], rng: &mut R) -> usize {
    let u = S::lit(rng.gen::<f64>());
    let mut acc = S::zero();
    for &(tok, p) in dist {
        acc += p;
        if u < acc {
            return tok;
        }
    }
    dist.last().map(|&(t, _)| t).expect("non-empty distribution")
}

/// Samples a continuation of `prompt`; stops after EOS (included) or `max_new_tokens`.
pub fn sample_with_rng<S: Scalar, R: Rng>(
    ckpt: &Checkpoint<S>,
    prompt: &[usize],
    cfg: &SampleConfig,
    rng: &mut R,
) -> Result<Vec<usize>, ModelError> {
    cfg.validate()?;
    if prompt.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    let budget = cfg.max_new_tokens.min(ckpt.config.context.saturating_sub(prompt.len()));
    let mut dec = ckpt.decoder();
    let mut hidden = Vec::new();
    for &tok in prompt {
        hidden = dec.step(tok)?;
    }
    let mut out = Vec::new();
    for i in 0..budget {
        let logits = dec.logits(&hidden);
        let dist = truncated_distribution(&logits, cfg.temperature, cfg.top_k, cfg.top_p);
        let tok = draw(&dist, rng);
        out.push(tok);
        if tok == EOS {
            break;
        }
        if i + 1 < budget {
            hidden = dec.step(tok)?;
        }
    }
    Ok(out)
}

/// Samples with a generator seeded from `cfg.seed`.
pub fn sample<S: Scalar>(ckpt: &Checkpoint<S>, prompt: &[usize], cfg: &SampleConfig) -> Result<Vec<usize>, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    sample_with_rng(ckpt, prompt, cfg, &mut rng)
}
