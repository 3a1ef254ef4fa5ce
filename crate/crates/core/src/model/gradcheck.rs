//! Finite-difference validation of reverse-mode gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::graph::{Graph, Var};
use super::params::ParamStore;
use super::transformer::Bound;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Elements sampled from each tensor (all elements if the tensor is smaller).
    pub per_tensor: usize,
    pub seed: u64,
    /// Gradients with `max(|analytic|, |numeric|)` below this are compared absolutely.
    pub abs_floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self { step: 1e-5, per_tensor: 4, seed: 0, abs_floor: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckEntry {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst: Option<GradCheckEntry>,
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error <= tolerance
    }
}

pub fn rel_error(analytic: f64, numeric: f64, abs_floor: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(abs_floor);
    (analytic - numeric).abs() / scale
}

/// Compares the tape gradient of `loss` with central differences on a seeded
/// sample of parameter elements. `loss` builds a scalar on the given graph
/// from the bound parameters.
pub fn grad_check<S, F>(params: &ParamStore<S>, loss: F, opts: &GradCheckOptions) -> GradCheckReport
where
    S: Scalar,
    F: Fn(&mut Graph<S>, &ParamStore<S>, &Bound) -> Var,
{
    let mut g = Graph::new();
    let bound = Bound::trainable(&mut g, params);
    let root = loss(&mut g, params, &bound);
    g.backward(root);
    let grads = bound.grads(&mut g);

    let eval = |p: &ParamStore<S>| -> f64 {
        let mut g = Graph::new();
        let bound = Bound::frozen(&mut g, p);
        let root = loss(&mut g, p, &bound);
        g.value(root).item().as_f64()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut work = params.clone();
    let mut entries = Vec::new();
    let h = S::lit(opts.step);
    for ti in 0..params.len() {
        let n = params.by_index(ti).len();
        let picks = sample(&mut rng, n, opts.per_tensor.min(n));
        for idx in picks.iter() {
            let original = params.by_index(ti).data[idx];
            work.by_index_mut(ti).data[idx] = original + h;
            let plus = eval(&work);
            work.by_index_mut(ti).data[idx] = original - h;
            let minus = eval(&work);
            work.by_index_mut(ti).data[idx] = original;
            // divide by the step actually taken after rounding
            let span = ((original + h) - (original - h)).as_f64();
            let numeric = (plus - minus) / span;
            let analytic = grads.tensors[ti].data[idx].as_f64();
            entries.push(GradCheckEntry {
                param: params.name(ti).to_string(),
                index: idx,
                analytic,
                numeric,
                rel_error: rel_error(analytic, numeric, opts.abs_floor),
            });
        }
    }
    let worst = entries.iter().max_by(|a, b| a.rel_error.total_cmp(&b.rel_error)).cloned();
    GradCheckReport {
        checked: entries.len(),
        max_rel_error: worst.as_ref().map_or(0.0, |w| w.rel_error),
        worst,
        entries,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tensor::Tensor;

    fn store() -> ParamStore<f64> {
        let mut p = ParamStore::new();
        p.insert("a", Tensor::from_vec(2, 2, vec![0.3, -1.2, 2.5, 0.7]));
        p.insert("b", Tensor::from_vec(1, 3, vec![-0.4, 0.9, 1.1]));
        p
    }

    #[test]
    fn quadratic_gradient_is_theta() {
        let p = store();
        let report = grad_check(
            &p,
            |g, p, b| {
                let mut total = None;
                for name in ["a", "b"] {
                    let v = b.var(p, name);
                    let sq = g.mul(v, v);
                    let s = g.sum(sq);
                    total = Some(match total {
                        None => s,
                        Some(t) => g.add(t, s),
                    });
                }
                g.scale(total.unwrap(), 0.5)
            },
            &GradCheckOptions { per_tensor: 10, ..Default::default() },
        );
        assert_eq!(report.checked, 7);
        for e in &report.entries {
            let theta = p.expect(&e.param).data[e.index];
            assert_eq!(e.analytic, theta);
        }
        assert!(report.max_rel_error < 1e-10, "{report:?}");
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let p = store();
        let report = grad_check(
            &p,
            |g, _, _| g.constant(Tensor::scalar(4.2)),
            &GradCheckOptions { per_tensor: 10, ..Default::default() },
        );
        assert!(report.entries.iter().all(|e| e.analytic == 0.0 && e.numeric == 0.0));
        assert_eq!(report.max_rel_error, 0.0);
    }
}
