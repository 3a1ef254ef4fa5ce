use serde::{Deserialize, Serialize};

use super::params::{Grads, ParamStore};
use super::tensor::Tensor;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay (AdamW); 0 gives plain Adam.
    pub weight_decay: f64,
    /// Global-norm gradient clipping; 0 disables.
    pub grad_clip: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1.41e-5, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0, grad_clip: 1.0 }
    }
}

pub struct Adam<S> {
    cfg: AdamConfig,
    m: Vec<Tensor<S>>,
    v: Vec<Tensor<S>>,
    t: i32,
}

impl<S: Scalar> Adam<S> {
    pub fn new(cfg: AdamConfig, params: &ParamStore<S>) -> Self {
        Self { cfg, m: params.zeros_like(), v: params.zeros_like(), t: 0 }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.cfg
    }

    /// Applies one update. Returns the pre-clipping gradient norm.
    pub fn step(&mut self, params: &mut ParamStore<S>, grads: &Grads<S>) -> S {
        assert_eq!(params.len(), grads.tensors.len(), "gradient/parameter count mismatch");
        let norm = grads.global_norm();
        let clip = if self.cfg.grad_clip > 0.0 && norm > S::lit(self.cfg.grad_clip) {
            S::lit(self.cfg.grad_clip) / norm
        } else {
            S::one()
        };
        self.t += 1;
        let (b1, b2) = (S::lit(self.cfg.beta1), S::lit(self.cfg.beta2));
        let bc1 = S::one() - b1.powi(self.t);
        let bc2 = S::one() - b2.powi(self.t);
        let lr = S::lit(self.cfg.lr);
        let eps = S::lit(self.cfg.eps);
        let wd = S::lit(self.cfg.weight_decay);
        for (i, g) in grads.tensors.iter().enumerate() {
            let p = params.by_index_mut(i);
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..p.data.len() {
                let gj = g.data[j] * clip;
                m.data[j] = b1 * m.data[j] + (S::one() - b1) * gj;
                v.data[j] = b2 * v.data[j] + (S::one() - b2) * gj * gj;
                let mhat = m.data[j] / bc1;
                let vhat = v.data[j] / bc2;
                let mut update = mhat / (vhat.sqrt() + eps);
                if wd > S::zero() {
                    update += wd * p.data[j];
                }
                p.data[j] -= lr * update;
            }
        }
        norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut p = ParamStore::<f64>::new();
        p.insert("w", Tensor::from_vec(1, 3, vec![0.5, -1.0, 2.0]));
        let before = p.clone();
        let mut opt = Adam::new(AdamConfig::with_lr(0.1), &p);
        opt.step(&mut p, &Grads::zeros_like(&before));
        assert_eq!(p, before);
    }

    #[test]
    fn minimises_a_quadratic() {
        let mut p = ParamStore::<f64>::new();
        p.insert("w", Tensor::from_vec(1, 2, vec![3.0, -2.0]));
        let mut opt = Adam::new(AdamConfig { grad_clip: 0.0, ..AdamConfig::with_lr(0.05) }, &p);
        for _ in 0..500 {
            let g = Grads { tensors: vec![p.expect("w").clone()] };
            opt.step(&mut p, &g);
        }
        assert!(p.expect("w").data.iter().all(|v| v.abs() < 1e-2));
    }
}
