//! Decoder-only transformer (pre-norm, learned positions, GELU MLP).

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{gelu, Graph, Var};
use super::params::{Grads, ParamStore};
use super::tensor::{matmul_acc, softmax_in_place, Tensor};
use super::ModelError;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    pub width: usize,
    pub context: usize,
    pub vocab_size: usize,
}

impl ModelConfig {
    /// The default desk-scale shape: 4 layers, 4 heads, width 128, context 512.
    pub fn desk(vocab_size: usize) -> Self {
        Self { layers: 4, heads: 4, width: 128, context: 512, vocab_size }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fields = [
            ("layers", self.layers),
            ("heads", self.heads),
            ("width", self.width),
            ("context", self.context),
            ("vocab_size", self.vocab_size),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(ModelError::Config(format!("{name} must be positive")));
            }
        }
        if !self.width.is_multiple_of(self.heads) {
            return Err(ModelError::Config(format!(
                "width {} is not divisible by heads {}",
                self.width, self.heads
            )));
        }
        Ok(())
    }

    pub fn mlp_width(&self) -> usize {
        4 * self.width
    }
}

/// How to initialise a fresh parameter set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitOptions {
    pub std: f64,
    /// Zero the output projection so the initial next-token distribution is uniform.
    pub zero_head: bool,
}

impl Default for InitOptions {
    fn default() -> Self {
        Self { std: 0.02, zero_head: true }
    }
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn normal<S: Scalar, R: Rng>(rng: &mut R, rows: usize, cols: usize, std: f64) -> Tensor<S> {
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| S::lit(gaussian(rng) * std)).collect())
}

/// Builds a freshly initialised parameter set for `cfg`.
pub fn init_params<S: Scalar, R: Rng>(cfg: &ModelConfig, opts: InitOptions, rng: &mut R) -> ParamStore<S> {
    let c = cfg.width;
    let m = cfg.mlp_width();
    let resid_std = opts.std / (2.0 * cfg.layers as f64).sqrt();
    let mut p = ParamStore::new();
    p.insert("wte", normal(rng, cfg.vocab_size, c, opts.std));
    p.insert("wpe", normal(rng, cfg.context, c, opts.std / 2.0));
    for l in 0..cfg.layers {
        p.insert(format!("h{l}.ln1.g"), Tensor::filled(1, c, S::one()));
        p.insert(format!("h{l}.ln1.b"), Tensor::zeros(1, c));
        p.insert(format!("h{l}.attn.wqkv"), normal(rng, c, 3 * c, opts.std));
        p.insert(format!("h{l}.attn.bqkv"), Tensor::zeros(1, 3 * c));
        p.insert(format!("h{l}.attn.wo"), normal(rng, c, c, resid_std));
        p.insert(format!("h{l}.attn.bo"), Tensor::zeros(1, c));
        p.insert(format!("h{l}.ln2.g"), Tensor::filled(1, c, S::one()));
        p.insert(format!("h{l}.ln2.b"), Tensor::zeros(1, c));
        p.insert(format!("h{l}.mlp.w1"), normal(rng, c, m, opts.std));
        p.insert(format!("h{l}.mlp.b1"), Tensor::zeros(1, m));
        p.insert(format!("h{l}.mlp.w2"), normal(rng, m, c, resid_std));
        p.insert(format!("h{l}.mlp.b2"), Tensor::zeros(1, c));
    }
    p.insert("lnf.g", Tensor::filled(1, c, S::one()));
    p.insert("lnf.b", Tensor::zeros(1, c));
    let head = if opts.zero_head { Tensor::zeros(c, cfg.vocab_size) } else { normal(rng, c, cfg.vocab_size, opts.std) };
    p.insert("lm_head", head);
    p
}

/// Adds a scalar head `name.w: C x 1`, `name.b: 1 x 1` (zero-initialised) if absent.
pub fn ensure_scalar_head<S: Scalar>(params: &mut ParamStore<S>, cfg: &ModelConfig, name: &str) {
    if !params.contains(&format!("{name}.w")) {
        params.insert(format!("{name}.w"), Tensor::zeros(cfg.width, 1));
        params.insert(format!("{name}.b"), Tensor::zeros(1, 1));
    }
}

/// Every parameter placed on a graph, in [`ParamStore`] order.
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    /// Places `params` on `g` as trainable leaves.
    pub fn trainable<S: Scalar>(g: &mut Graph<S>, params: &ParamStore<S>) -> Self {
        Self { vars: params.tensors().iter().map(|t| g.param(t.clone())).collect() }
    }

    /// Places `params` on `g` as constants.
    pub fn frozen<S: Scalar>(g: &mut Graph<S>, params: &ParamStore<S>) -> Self {
        Self { vars: params.tensors().iter().map(|t| g.constant(t.clone())).collect() }
    }

    pub fn var<S: Scalar>(&self, params: &ParamStore<S>, name: &str) -> Var {
        let i = params.index_of(name).unwrap_or_else(|| panic!("missing parameter `{name}`"));
        self.vars[i]
    }

    /// Collects gradients for every parameter after `g.backward`.
    pub fn grads<S: Scalar>(&self, g: &mut Graph<S>) -> Grads<S> {
        Grads { tensors: self.vars.iter().map(|&v| g.take_grad(v)).collect() }
    }
}

pub(crate) fn check_length(cfg: &ModelConfig, len: usize) -> Result<(), ModelError> {
    if len > cfg.context {
        return Err(ModelError::Length { len, context: cfg.context });
    }
    if len == 0 {
        return Err(ModelError::EmptyInput);
    }
    Ok(())
}

/// Final-layer-norm hidden states `T x C` on the tape.
pub fn hidden_on_graph<S: Scalar>(
    g: &mut Graph<S>,
    cfg: &ModelConfig,
    params: &ParamStore<S>,
    bound: &Bound,
    tokens: &[usize],
) -> Result<Var, ModelError> {
    check_length(cfg, tokens.len())?;
    let v = |name: &str| bound.var(params, name);
    let positions: Vec<usize> = (0..tokens.len()).collect();
    let tok = g.embed(v("wte"), tokens);
    let pos = g.embed(v("wpe"), &positions);
    let mut x = g.add(tok, pos);
    for l in 0..cfg.layers {
        let h = g.layer_norm(x, v(&format!("h{l}.ln1.g")), v(&format!("h{l}.ln1.b")));
        let qkv = g.matmul(h, v(&format!("h{l}.attn.wqkv")));
        let qkv = g.add_row(qkv, v(&format!("h{l}.attn.bqkv")));
        let att = g.causal_attention(qkv, cfg.heads);
        let proj = g.matmul(att, v(&format!("h{l}.attn.wo")));
        let proj = g.add_row(proj, v(&format!("h{l}.attn.bo")));
        x = g.add(x, proj);
        let h = g.layer_norm(x, v(&format!("h{l}.ln2.g")), v(&format!("h{l}.ln2.b")));
        let up = g.matmul(h, v(&format!("h{l}.mlp.w1")));
        let up = g.add_row(up, v(&format!("h{l}.mlp.b1")));
        let act = g.gelu(up);
        let down = g.matmul(act, v(&format!("h{l}.mlp.w2")));
        let down = g.add_row(down, v(&format!("h{l}.mlp.b2")));
        x = g.add(x, down);
    }
    Ok(g.layer_norm(x, v("lnf.g"), v("lnf.b")))
}

/// Log-probabilities (`n x 1`) of `tokens[start..]` given their prefixes, on the tape.
pub fn token_logprobs_on_graph<S: Scalar>(
    g: &mut Graph<S>,
    params: &ParamStore<S>,
    bound: &Bound,
    hidden: Var,
    tokens: &[usize],
    start: usize,
) -> Var {
    assert!(start >= 1 && start <= tokens.len());
    let rows = g.rows(hidden, start - 1, tokens.len() - 1);
    let logits = g.matmul(rows, bound.var(params, "lm_head"));
    g.log_softmax_pick(logits, &tokens[start..])
}

/// Scalar head applied to hidden row `row`: `1 x 1`.
pub fn scalar_head_on_graph<S: Scalar>(
    g: &mut Graph<S>,
    params: &ParamStore<S>,
    bound: &Bound,
    hidden: Var,
    row: usize,
    head: &str,
) -> Var {
    let h = g.rows(hidden, row, row + 1);
    let y = g.matmul(h, bound.var(params, &format!("{head}.w")));
    g.add(y, bound.var(params, &format!("{head}.b")))
}

/// Incremental (key/value-cached) evaluation without a tape.
pub struct Decoder<'a, S> {
    cfg: &'a ModelConfig,
    params: &'a ParamStore<S>,
    layers: Vec<LayerRefs<'a, S>>,
    keys: Vec<Vec<S>>,
    values: Vec<Vec<S>>,
    len: usize,
}

struct LayerRefs<'a, S> {
    ln1g: &'a Tensor<S>,
    ln1b: &'a Tensor<S>,
    wqkv: &'a Tensor<S>,
    bqkv: &'a Tensor<S>,
    wo: &'a Tensor<S>,
    bo: &'a Tensor<S>,
    ln2g: &'a Tensor<S>,
    ln2b: &'a Tensor<S>,
    w1: &'a Tensor<S>,
    b1: &'a Tensor<S>,
    w2: &'a Tensor<S>,
    b2: &'a Tensor<S>,
}

fn layer_norm_vec<S: Scalar>(x: &[S], g: &Tensor<S>, b: &Tensor<S>) -> Vec<S> {
    let n = S::lit(x.len() as f64);
    let mean = x.iter().copied().sum::<S>() / n;
    let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / n;
    let rs = S::one() / (var + S::lit(1e-5)).sqrt();
    x.iter().zip(&g.data).zip(&b.data).map(|((&v, &gg), &bb)| (v - mean) * rs * gg + bb).collect()
}

fn affine<S: Scalar>(x: &[S], w: &Tensor<S>, b: Option<&Tensor<S>>) -> Vec<S> {
    let mut out = match b {
        Some(b) => b.data.clone(),
        None => vec![S::zero(); w.cols],
    };
    matmul_acc(x, &w.data, &mut out, 1, w.rows, w.cols);
    out
}

impl<'a, S: Scalar> Decoder<'a, S> {
    pub fn new(cfg: &'a ModelConfig, params: &'a ParamStore<S>) -> Self {
        let layers = (0..cfg.layers)
            .map(|l| {
                let t = |n: &str| params.expect(&format!("h{l}.{n}"));
                LayerRefs {
                    ln1g: t("ln1.g"),
                    ln1b: t("ln1.b"),
                    wqkv: t("attn.wqkv"),
                    bqkv: t("attn.bqkv"),
                    wo: t("attn.wo"),
                    bo: t("attn.bo"),
                    ln2g: t("ln2.g"),
                    ln2b: t("ln2.b"),
                    w1: t("mlp.w1"),
                    b1: t("mlp.b1"),
                    w2: t("mlp.w2"),
                    b2: t("mlp.b2"),
                }
            })
            .collect();
        Self {
            cfg,
            params,
            layers,
            keys: vec![Vec::new(); cfg.layers],
            values: vec![Vec::new(); cfg.layers],
            len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Feeds one token and returns the final hidden state at its position.
    pub fn step(&mut self, token: usize) -> Result<Vec<S>, ModelError> {
        let cfg = self.cfg;
        if self.len >= cfg.context {
            return Err(ModelError::Length { len: self.len + 1, context: cfg.context });
        }
        if token >= cfg.vocab_size {
            return Err(ModelError::TokenOutOfRange(token));
        }
        let c = cfg.width;
        let hd = c / cfg.heads;
        let scale = S::one() / S::lit(hd as f64).sqrt();
        let wte = self.params.expect("wte");
        let wpe = self.params.expect("wpe");
        let mut x: Vec<S> = wte.row(token).iter().zip(wpe.row(self.len)).map(|(&a, &b)| a + b).collect();
        let t_len = self.len + 1;
        for (l, w) in self.layers.iter().enumerate() {
            let h = layer_norm_vec(&x, w.ln1g, w.ln1b);
            let qkv = affine(&h, w.wqkv, Some(w.bqkv));
            self.keys[l].extend_from_slice(&qkv[c..2 * c]);
            self.values[l].extend_from_slice(&qkv[2 * c..]);
            let mut att = vec![S::zero(); c];
            let mut scores = vec![S::zero(); t_len];
            for head in 0..cfg.heads {
                let q = &qkv[head * hd..(head + 1) * hd];
                for (s, score) in scores.iter_mut().enumerate() {
                    let k = &self.keys[l][s * c + head * hd..s * c + (head + 1) * hd];
                    *score = q.iter().zip(k).map(|(&a, &b)| a * b).sum::<S>() * scale;
                }
                softmax_in_place(&mut scores);
                let o = &mut att[head * hd..(head + 1) * hd];
                for (s, &p) in scores.iter().enumerate() {
                    let v = &self.values[l][s * c + head * hd..s * c + (head + 1) * hd];
                    for (ov, &vv) in o.iter_mut().zip(v) {
                        *ov += p * vv;
                    }
                }
            }
            let proj = affine(&att, w.wo, Some(w.bo));
            for (xv, p) in x.iter_mut().zip(proj) {
                *xv += p;
            }
            let h = layer_norm_vec(&x, w.ln2g, w.ln2b);
            let up: Vec<S> = affine(&h, w.w1, Some(w.b1)).into_iter().map(|u| gelu(u).0).collect();
            let down = affine(&up, w.w2, Some(w.b2));
            for (xv, d) in x.iter_mut().zip(down) {
                *xv += d;
            }
        }
        self.len += 1;
        Ok(layer_norm_vec(&x, self.params.expect("lnf.g"), self.params.expect("lnf.b")))
    }

    /// Next-token scores from a hidden state.
    pub fn logits(&self, hidden: &[S]) -> Vec<S> {
        affine(hidden, self.params.expect("lm_head"), None)
    }

    /// Scalar head `name` applied to a hidden state.
    pub fn scalar_head(&self, hidden: &[S], name: &str) -> S {
        let w = self.params.expect(&format!("{name}.w"));
        let b = self.params.expect(&format!("{name}.b"));
        affine(hidden, w, Some(b))[0]
    }
}

/// Hidden states `T x C` for a whole sequence, without a tape.
pub fn hidden_states<S: Scalar>(cfg: &ModelConfig, params: &ParamStore<S>, tokens: &[usize]) -> Result<Tensor<S>, ModelError> {
    check_length(cfg, tokens.len())?;
    let mut dec = Decoder::new(cfg, params);
    let mut out = Tensor::zeros(tokens.len(), cfg.width);
    for (t, &tok) in tokens.iter().enumerate() {
        let h = dec.step(tok)?;
        out.row_mut(t).copy_from_slice(&h);
    }
    Ok(out)
}
