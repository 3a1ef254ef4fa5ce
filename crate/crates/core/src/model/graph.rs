//! Tape-based reverse-mode differentiation over [`Tensor`]s.
//!
//! Nodes are appended in evaluation order, so the tape itself is a
//! topological order and the backward pass is a single reverse sweep.

use super::tensor::{matmul, matmul_at_acc, matmul_bt_acc, softmax_in_place, Tensor};
use crate::Scalar;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

const LAYER_NORM_EPS: f64 = 1e-5;

enum Op<S> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, S),
    AddScalar(Var),
    Exp(Var),
    Softplus(Var),
    Gelu(Var),
    Clamp(Var, S, S),
    Min(Var, Var),
    Sum(Var),
    Rows(Var, usize),
    Pick(Var, usize, usize),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<S>, rstd: Vec<S> },
    Embed { table: Var, ids: Vec<usize> },
    Attention { qkv: Var, heads: usize, probs: Vec<S> },
    LogSoftmaxPick { logits: Var, targets: Vec<usize>, probs: Vec<S> },
}

struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
    needs_grad: bool,
}

/// A single-use computation tape.
pub struct Graph<S> {
    nodes: Vec<Node<S>>,
    grads: Vec<Option<Tensor<S>>>,
}

impl<S: Scalar> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), grads: Vec::new() }
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Tensor<S>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf excluded from differentiation.
    pub fn constant(&mut self, value: Tensor<S>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Gradient of the last `backward` root with respect to `v`, zeros if
    /// `v` did not influence it.
    pub fn grad(&self, v: Var) -> Tensor<S> {
        match self.grads.get(v.0).and_then(|g| g.as_ref()) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.nodes[v.0].value.shape();
                Tensor::zeros(r, c)
            }
        }
    }

    /// Moves the gradient out instead of cloning it.
    pub fn take_grad(&mut self, v: Var) -> Tensor<S> {
        match self.grads.get_mut(v.0).and_then(Option::take) {
            Some(g) => g,
            None => {
                let (r, c) = self.nodes[v.0].value.shape();
                Tensor::zeros(r, c)
            }
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = matmul(self.value(a), self.value(b));
        let ng = self.needs(a) || self.needs(b);
        self.push(value, Op::MatMul(a, b), ng)
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(S, S) -> S) -> Tensor<S> {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "elementwise op on mismatched shapes");
        Tensor::from_vec(x.rows, x.cols, x.data.iter().zip(&y.data).map(|(&p, &q)| f(p, q)).collect())
    }

    fn map(&self, a: Var, f: impl Fn(S) -> S) -> Tensor<S> {
        let x = self.value(a);
        Tensor::from_vec(x.rows, x.cols, x.data.iter().map(|&p| f(p)).collect())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.zip_with(a, b, |p, q| p + q);
        let ng = self.needs(a) || self.needs(b);
        self.push(value, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.zip_with(a, b, |p, q| p - q);
        let ng = self.needs(a) || self.needs(b);
        self.push(value, Op::Sub(a, b), ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.zip_with(a, b, |p, q| p * q);
        let ng = self.needs(a) || self.needs(b);
        self.push(value, Op::Mul(a, b), ng)
    }

    /// `x + row` with `row: 1 x n` broadcast over the rows of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Var {
        let (xv, rv) = (self.value(x), self.value(row));
        assert_eq!(rv.rows, 1);
        assert_eq!(xv.cols, rv.cols);
        let mut value = xv.clone();
        for r in 0..value.rows {
            for (o, &b) in value.row_mut(r).iter_mut().zip(&rv.data) {
                *o += b;
            }
        }
        let ng = self.needs(x) || self.needs(row);
        self.push(value, Op::AddRow(x, row), ng)
    }

    pub fn scale(&mut self, a: Var, s: S) -> Var {
        let value = self.map(a, |p| p * s);
        let ng = self.needs(a);
        self.push(value, Op::Scale(a, s), ng)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -S::one())
    }

    pub fn add_scalar(&mut self, a: Var, s: S) -> Var {
        let value = self.map(a, |p| p + s);
        let ng = self.needs(a);
        self.push(value, Op::AddScalar(a), ng)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.map(a, S::exp);
        let ng = self.needs(a);
        self.push(value, Op::Exp(a), ng)
    }

    /// `ln(1 + e^x)`, so `-ln σ(z) = softplus(-z)`.
    pub fn softplus(&mut self, a: Var) -> Var {
        let value = self.map(a, crate::scalar::softplus);
        let ng = self.needs(a);
        self.push(value, Op::Softplus(a), ng)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let value = self.map(a, |x| gelu(x).0);
        let ng = self.needs(a);
        self.push(value, Op::Gelu(a), ng)
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where clamping is active.
    pub fn clamp(&mut self, a: Var, lo: S, hi: S) -> Var {
        let value = self.map(a, |p| p.max(lo).min(hi));
        let ng = self.needs(a);
        self.push(value, Op::Clamp(a, lo, hi), ng)
    }

    /// Element-wise minimum; ties route the gradient to `a`.
    pub fn min(&mut self, a: Var, b: Var) -> Var {
        let value = self.zip_with(a, b, |p, q| if q < p { q } else { p });
        let ng = self.needs(a) || self.needs(b);
        self.push(value, Op::Min(a, b), ng)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        let ng = self.needs(a);
        self.push(value, Op::Sum(a), ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = S::lit(self.value(a).len() as f64);
        let s = self.sum(a);
        self.scale(s, S::one() / n)
    }

    /// Rows `start..end` of `a`.
    pub fn rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let x = self.value(a);
        assert!(start <= end && end <= x.rows, "row slice out of range");
        let value = Tensor::from_vec(end - start, x.cols, x.data[start * x.cols..end * x.cols].to_vec());
        let ng = self.needs(a);
        self.push(value, Op::Rows(a, start), ng)
    }

    /// Element `(r, c)` as a `1 x 1` tensor.
    pub fn pick(&mut self, a: Var, r: usize, c: usize) -> Var {
        let value = Tensor::scalar(self.value(a).at(r, c));
        let ng = self.needs(a);
        self.push(value, Op::Pick(a, r, c), ng)
    }

    /// Row-wise layer normalisation with affine `gamma`, `beta` (`1 x n`).
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        let n = S::lit(cols as f64);
        let eps = S::lit(LAYER_NORM_EPS);
        let g = &self.value(gamma).data;
        let b = &self.value(beta).data;
        let mut out = Tensor::zeros(rows, cols);
        let mut xhat = vec![S::zero(); rows * cols];
        let mut rstd = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().copied().sum::<S>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / n;
            let rs = S::one() / (var + eps).sqrt();
            rstd.push(rs);
            for c in 0..cols {
                let h = (row[c] - mean) * rs;
                xhat[r * cols + c] = h;
                out.data[r * cols + c] = h * g[c] + b[c];
            }
        }
        let ng = self.needs(x) || self.needs(gamma) || self.needs(beta);
        self.push(out, Op::LayerNorm { x, gamma, beta, xhat, rstd }, ng)
    }

    /// Gathers rows `ids` of `table`.
    pub fn embed(&mut self, table: Var, ids: &[usize]) -> Var {
        let t = self.value(table);
        let mut out = Tensor::zeros(ids.len(), t.cols);
        for (i, &id) in ids.iter().enumerate() {
            out.row_mut(i).copy_from_slice(t.row(id));
        }
        let ng = self.needs(table);
        self.push(out, Op::Embed { table, ids: ids.to_vec() }, ng)
    }

    /// Causal multi-head self-attention over packed `qkv: T x 3C`, returning `T x C`.
    pub fn causal_attention(&mut self, qkv: Var, heads: usize) -> Var {
        let x = self.value(qkv);
        let (out, probs) = attention_forward(x, heads);
        let ng = self.needs(qkv);
        self.push(out, Op::Attention { qkv, heads, probs }, ng)
    }

    /// Log-probability of `targets[i]` under the softmax of row `i` of `logits`; `T x 1`.
    pub fn log_softmax_pick(&mut self, logits: Var, targets: &[usize]) -> Var {
        let lv = self.value(logits);
        assert_eq!(lv.rows, targets.len(), "one target per logits row");
        let mut probs = lv.data.clone();
        let mut out = Tensor::zeros(lv.rows, 1);
        for (r, &t) in targets.iter().enumerate() {
            let row = lv.row(r);
            let max = row.iter().copied().fold(S::neg_infinity(), S::max);
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<S>().ln();
            out.data[r] = row[t] - lse;
            for (p, &v) in probs[r * lv.cols..(r + 1) * lv.cols].iter_mut().zip(row) {
                *p = (v - lse).exp();
            }
        }
        let ng = self.needs(logits);
        self.push(out, Op::LogSoftmaxPick { logits, targets: targets.to_vec(), probs }, ng)
    }

    fn accumulate(&mut self, v: Var, f: impl FnOnce(&mut Tensor<S>)) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        let slot = &mut self.grads[v.0];
        if slot.is_none() {
            let (r, c) = self.nodes[v.0].value.shape();
            *slot = Some(Tensor::zeros(r, c));
        }
        f(slot.as_mut().expect("gradient slot initialised"));
    }

    /// Reverse sweep from a scalar `root`, seeding `d root = 1`.
    pub fn backward(&mut self, root: Var) {
        assert_eq!(self.value(root).len(), 1, "backward root must be a scalar");
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[root.0] = Some(Tensor::scalar(S::one()));
        for i in (0..=root.0).rev() {
            let Some(g) = self.grads[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            // Temporarily detach the op so inputs can be borrowed mutably.
            let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
            self.propagate(i, &op, &g);
            self.nodes[i].op = op;
            self.grads[i] = Some(g);
        }
    }

    fn propagate(&mut self, i: usize, op: &Op<S>, g: &Tensor<S>) {
        match *op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.value(a).shape();
                let n = self.value(b).cols;
                if self.needs(a) {
                    let bv = self.nodes[b.0].value.data.clone();
                    self.accumulate(a, |ga| matmul_bt_acc(&g.data, &bv, &mut ga.data, m, k, n));
                }
                if self.needs(b) {
                    let av = self.nodes[a.0].value.data.clone();
                    self.accumulate(b, |gb| matmul_at_acc(&av, &g.data, &mut gb.data, m, k, n));
                }
            }
            Op::Add(a, b) => {
                self.accumulate(a, |ga| ga.add_assign(g));
                self.accumulate(b, |gb| gb.add_assign(g));
            }
            Op::Sub(a, b) => {
                self.accumulate(a, |ga| ga.add_assign(g));
                self.accumulate(b, |gb| {
                    for (o, &d) in gb.data.iter_mut().zip(&g.data) {
                        *o -= d;
                    }
                });
            }
            Op::Mul(a, b) => {
                let av = self.value(a).data.clone();
                let bv = self.value(b).data.clone();
                self.accumulate(a, |ga| {
                    for ((o, &d), &y) in ga.data.iter_mut().zip(&g.data).zip(&bv) {
                        *o += d * y;
                    }
                });
                self.accumulate(b, |gb| {
                    for ((o, &d), &x) in gb.data.iter_mut().zip(&g.data).zip(&av) {
                        *o += d * x;
                    }
                });
            }
            Op::AddRow(x, row) => {
                self.accumulate(x, |gx| gx.add_assign(g));
                self.accumulate(row, |gr| {
                    for r in 0..g.rows {
                        for (o, &d) in gr.data.iter_mut().zip(g.row(r)) {
                            *o += d;
                        }
                    }
                });
            }
            Op::Scale(a, s) => {
                self.accumulate(a, |ga| {
                    for (o, &d) in ga.data.iter_mut().zip(&g.data) {
                        *o += d * s;
                    }
                });
            }
            Op::AddScalar(a) => self.accumulate(a, |ga| ga.add_assign(g)),
            Op::Exp(a) => {
                let y = self.nodes[i].value.data.clone();
                self.accumulate(a, |ga| {
                    for ((o, &d), &e) in ga.data.iter_mut().zip(&g.data).zip(&y) {
                        *o += d * e;
                    }
                });
            }
            Op::Softplus(a) => {
                let x = self.value(a).data.clone();
                self.accumulate(a, |ga| {
                    for ((o, &d), &v) in ga.data.iter_mut().zip(&g.data).zip(&x) {
                        *o += d * crate::scalar::sigmoid(v);
                    }
                });
            }
            Op::Gelu(a) => {
                let x = self.value(a).data.clone();
                self.accumulate(a, |ga| {
                    for ((o, &d), &v) in ga.data.iter_mut().zip(&g.data).zip(&x) {
                        *o += d * gelu(v).1;
                    }
                });
            }
            Op::Clamp(a, lo, hi) => {
                let x = self.value(a).data.clone();
                self.accumulate(a, |ga| {
                    for ((o, &d), &v) in ga.data.iter_mut().zip(&g.data).zip(&x) {
                        if v >= lo && v <= hi {
                            *o += d;
                        }
                    }
                });
            }
            Op::Min(a, b) => {
                let av = self.value(a).data.clone();
                let bv = self.value(b).data.clone();
                self.accumulate(a, |ga| {
                    for (((o, &d), &p), &q) in ga.data.iter_mut().zip(&g.data).zip(&av).zip(&bv) {
                        if !(q < p) {
                            *o += d;
                        }
                    }
                });
                self.accumulate(b, |gb| {
                    for (((o, &d), &p), &q) in gb.data.iter_mut().zip(&g.data).zip(&av).zip(&bv) {
                        if q < p {
                            *o += d;
                        }
                    }
                });
            }
            Op::Sum(a) => {
                let d = g.item();
                self.accumulate(a, |ga| {
                    for o in &mut ga.data {
                        *o += d;
                    }
                });
            }
            Op::Rows(a, start) => {
                self.accumulate(a, |ga| {
                    let off = start * ga.cols;
                    for (o, &d) in ga.data[off..off + g.data.len()].iter_mut().zip(&g.data) {
                        *o += d;
                    }
                });
            }
            Op::Pick(a, r, c) => {
                let d = g.item();
                self.accumulate(a, |ga| {
                    let cols = ga.cols;
                    ga.data[r * cols + c] += d;
                });
            }
            Op::LayerNorm { x, gamma, beta, ref xhat, ref rstd } => {
                let (rows, cols) = g.shape();
                let gam = self.value(gamma).data.clone();
                if self.needs(x) {
                    let n = S::lit(cols as f64);
                    self.accumulate(x, |gx| {
                        let mut dxhat = vec![S::zero(); cols];
                        for r in 0..rows {
                            let gr = g.row(r);
                            let xh = &xhat[r * cols..(r + 1) * cols];
                            let mut mean_d = S::zero();
                            let mut mean_dx = S::zero();
                            for c in 0..cols {
                                dxhat[c] = gr[c] * gam[c];
                                mean_d += dxhat[c];
                                mean_dx += dxhat[c] * xh[c];
                            }
                            mean_d /= n;
                            mean_dx /= n;
                            let out = gx.row_mut(r);
                            for c in 0..cols {
                                out[c] += rstd[r] * (dxhat[c] - mean_d - xh[c] * mean_dx);
                            }
                        }
                    });
                }
                self.accumulate(gamma, |gg| {
                    for r in 0..rows {
                        for c in 0..cols {
                            gg.data[c] += g.at(r, c) * xhat[r * cols + c];
                        }
                    }
                });
                self.accumulate(beta, |gb| {
                    for r in 0..rows {
                        for (o, &d) in gb.data.iter_mut().zip(g.row(r)) {
                            *o += d;
                        }
                    }
                });
            }
            Op::Embed { table, ref ids } => {
                self.accumulate(table, |gt| {
                    for (r, &id) in ids.iter().enumerate() {
                        for (o, &d) in gt.row_mut(id).iter_mut().zip(g.row(r)) {
                            *o += d;
                        }
                    }
                });
            }
            Op::Attention { qkv, heads, ref probs } => {
                let x = self.value(qkv).clone();
                self.accumulate(qkv, |gq| attention_backward(&x, heads, probs, g, gq));
            }
            Op::LogSoftmaxPick { logits, ref targets, ref probs } => {
                self.accumulate(logits, |gl| {
                    let cols = gl.cols;
                    for (r, &t) in targets.iter().enumerate() {
                        let d = g.data[r];
                        let row = &mut gl.data[r * cols..(r + 1) * cols];
                        for (o, &p) in row.iter_mut().zip(&probs[r * cols..(r + 1) * cols]) {
                            *o -= d * p;
                        }
                        row[t] += d;
                    }
                });
            }
        }
    }
}

/// GELU (tanh approximation) and its derivative.
#[inline]
pub fn gelu<S: Scalar>(x: S) -> (S, S) {
    let c = S::lit((2.0 / std::f64::consts::PI).sqrt());
    let k = S::lit(0.044715);
    let half = S::lit(0.5);
    let three = S::lit(3.0);
    let inner = c * (x + k * x * x * x);
    let t = inner.tanh();
    let y = half * x * (S::one() + t);
    let dinner = c * (S::one() + three * k * x * x);
    let dy = half * (S::one() + t) + half * x * (S::one() - t * t) * dinner;
    (y, dy)
}

/// Returns the attention output `T x C` and the per-head probabilities
/// laid out as `[head][query][key]` (keys beyond the query are zero).
pub fn attention_forward<S: Scalar>(qkv: &Tensor<S>, heads: usize) -> (Tensor<S>, Vec<S>) {
    let t_len = qkv.rows;
    let c = qkv.cols / 3;
    let hd = c / heads;
    let scale = S::one() / S::lit(hd as f64).sqrt();
    let mut out = Tensor::zeros(t_len, c);
    let mut probs = vec![S::zero(); heads * t_len * t_len];
    let mut scores = vec![S::zero(); t_len];
    for h in 0..heads {
        let qo = h * hd;
        let ko = c + h * hd;
        let vo = 2 * c + h * hd;
        for t in 0..t_len {
            let q = &qkv.row(t)[qo..qo + hd];
            for s in 0..=t {
                let k = &qkv.row(s)[ko..ko + hd];
                scores[s] = q.iter().zip(k).map(|(&a, &b)| a * b).sum::<S>() * scale;
            }
            softmax_in_place(&mut scores[..=t]);
            let base = (h * t_len + t) * t_len;
            probs[base..=base + t].copy_from_slice(&scores[..=t]);
            let o = &mut out.row_mut(t)[h * hd..(h + 1) * hd];
            for s in 0..=t {
                let p = scores[s];
                let v = &qkv.row(s)[vo..vo + hd];
                for (ov, &vv) in o.iter_mut().zip(v) {
                    *ov += p * vv;
                }
            }
        }
    }
    (out, probs)
}

fn attention_backward<S: Scalar>(qkv: &Tensor<S>, heads: usize, probs: &[S], g: &Tensor<S>, gq: &mut Tensor<S>) {
    let t_len = qkv.rows;
    let c = qkv.cols / 3;
    let hd = c / heads;
    let width = qkv.cols;
    let scale = S::one() / S::lit(hd as f64).sqrt();
    let mut dp = vec![S::zero(); t_len];
    for h in 0..heads {
        let qo = h * hd;
        let ko = c + h * hd;
        let vo = 2 * c + h * hd;
        for t in 0..t_len {
            let base = (h * t_len + t) * t_len;
            let p = &probs[base..=base + t];
            let go = &g.row(t)[h * hd..(h + 1) * hd];
            let mut dot = S::zero();
            for s in 0..=t {
                let v = &qkv.row(s)[vo..vo + hd];
                dp[s] = go.iter().zip(v).map(|(&a, &b)| a * b).sum();
                dot += p[s] * dp[s];
                // dv[s] += p * go
                let dv = &mut gq.data[s * width + vo..s * width + vo + hd];
                for (o, &d) in dv.iter_mut().zip(go) {
                    *o += p[s] * d;
                }
            }
            for s in 0..=t {
                let ds = p[s] * (dp[s] - dot) * scale;
                if ds == S::zero() {
                    continue;
                }
                for d in 0..hd {
                    let kv = qkv.data[s * width + ko + d];
                    let qv = qkv.data[t * width + qo + d];
                    gq.data[t * width + qo + d] += ds * kv;
                    gq.data[s * width + ko + d] += ds * qv;
                }
            }
        }
    }
}
