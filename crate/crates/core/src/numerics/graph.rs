//! Tape-based reverse-mode differentiation over [`Tensor`] nodes.
//!
//! A [`Graph`] records every operation as it is applied. Nodes are appended
//! in evaluation order, so the node list is already a topological order and
//! [`Graph::backward`] is a single reverse sweep.
//!
//! All tensors are treated as matrices (vectors are one row). Batched ops
//! work row-wise, with the batch along the first axis.

use crate::error::{Error, Result};
use crate::numerics::kernels::{self, PROB_FLOOR};
use crate::numerics::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    LayerNorm { input: Var, inv_std: Vec<f64> },
    Softmax { input: Var, temperature: f64 },
    CrossEntropy { probs: Var, targets: Vec<usize> },
    KlDivergence { p: Var, q: Vec<f64> },
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of one scalar output with respect to every node that needs one.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<f64>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn shape_of(rows: usize, cols: usize) -> Vec<usize> {
    vec![rows, cols]
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable leaf. Gradients are accumulated for it.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t.detached(), Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t.detached(), Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).dims2();
        let (k2, n) = self.value(b).dims2();
        if k != k2 {
            return Err(Error::Dimension(format!(
                "matmul of {:?} and {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let out = kernels::matmul(self.value(a).values(), self.value(b).values(), m, k, n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(
            Tensor::new(shape_of(m, n), out)?,
            Op::MatMul(a, b),
            rg,
        ))
    }

    /// Adds a length-n bias to every row of an m×n input.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.value(x).dims2();
        if self.value(bias).len() != n {
            return Err(Error::Dimension(format!(
                "bias {:?} for rows of width {n}",
                self.value(bias).shape()
            )));
        }
        let mut out = self.value(x).values().to_vec();
        kernels::add_bias_rows(&mut out, self.value(bias).values());
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(Tensor::new(shape_of(m, n), out)?, Op::AddBias(x, bias), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::Dimension(format!(
                "elementwise add of {:?} and {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let out: Vec<f64> = self
            .value(a)
            .values()
            .iter()
            .zip(self.value(b).values())
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.value(a).shape().to_vec();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(shape, out)?, Op::Add(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let t = self.value(a);
        let out: Vec<f64> = t.values().iter().map(|v| v * c).collect();
        let value = Tensor::new(t.shape().to_vec(), out).expect("same shape");
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, c), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let mut out = t.values().to_vec();
        kernels::tanh_inplace(&mut out);
        let value = Tensor::new(t.shape().to_vec(), out).expect("same shape");
        let rg = self.rg(a);
        self.push(value, Op::Tanh(a), rg)
    }

    pub fn layer_norm(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let (_, n) = t.dims2();
        let (out, inv_std) = kernels::layer_norm_rows(t.values(), n);
        let value = Tensor::new(t.shape().to_vec(), out).expect("same shape");
        let rg = self.rg(a);
        self.push(value, Op::LayerNorm { input: a, inv_std }, rg)
    }

    pub fn softmax(&mut self, a: Var, temperature: f64) -> Result<Var> {
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(Error::Parameter(format!(
                "softmax temperature must be positive, got {temperature}"
            )));
        }
        let t = self.value(a);
        let (_, n) = t.dims2();
        if n < 2 {
            return Err(Error::Parameter("softmax needs at least 2 classes".into()));
        }
        let out = kernels::softmax_rows(t.values(), n, temperature);
        let value = Tensor::new(t.shape().to_vec(), out)?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::Softmax { input: a, temperature }, rg))
    }

    /// Mean over rows of `-ln(max(p[r, y_r], floor))`.
    pub fn cross_entropy(&mut self, probs: Var, targets: &[usize]) -> Result<Var> {
        let t = self.value(probs);
        let (m, k) = t.dims2();
        if targets.len() != m {
            return Err(Error::Dimension(format!(
                "{} targets for {m} rows",
                targets.len()
            )));
        }
        let mut total = 0.0;
        for (r, &y) in targets.iter().enumerate() {
            if y >= k {
                return Err(Error::Index(format!("gold class {y} with K={k}")));
            }
            total -= t.row(r)[y].max(PROB_FLOOR).ln();
        }
        let rg = self.rg(probs);
        Ok(self.push(
            Tensor::scalar(total / m as f64),
            Op::CrossEntropy {
                probs,
                targets: targets.to_vec(),
            },
            rg,
        ))
    }

    /// Mean over rows of `KL(p_r || q_r)`. `q` is a constant target.
    pub fn kl_divergence(&mut self, p: Var, q: &Tensor) -> Result<Var> {
        let t = self.value(p);
        if t.dims2() != q.dims2() {
            return Err(Error::Dimension(format!(
                "KL between {:?} and {:?}",
                t.shape(),
                q.shape()
            )));
        }
        let (m, _) = t.dims2();
        let total: f64 = t
            .values()
            .iter()
            .zip(q.values())
            .map(|(&pi, &qi)| pi * (pi.max(PROB_FLOOR).ln() - qi.max(PROB_FLOOR).ln()))
            .sum();
        let rg = self.rg(p);
        Ok(self.push(
            Tensor::scalar(total / m as f64),
            Op::KlDivergence {
                p,
                q: q.values().to_vec(),
            },
            rg,
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).values().iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn backward(&self, out: Var) -> Result<Gradients> {
        if self.value(out).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar output, got shape {:?}",
                self.value(out).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[out.0] = Some(vec![1.0]);

        for idx in (0..=out.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (m, k) = self.value(*a).dims2();
                    let (_, n) = self.value(*b).dims2();
                    if self.rg(*a) {
                        let bv = self.value(*b).values();
                        let mut da = vec![0.0; m * k];
                        for i in 0..m {
                            let grow = &g[i * n..(i + 1) * n];
                            for p in 0..k {
                                da[i * k + p] = kernels::dot(grow, &bv[p * n..(p + 1) * n]);
                            }
                        }
                        accumulate(&mut grads, *a, da);
                    }
                    if self.rg(*b) {
                        let av = self.value(*a).values();
                        let mut db = vec![0.0; k * n];
                        for i in 0..m {
                            let grow = &g[i * n..(i + 1) * n];
                            for p in 0..k {
                                let aip = av[i * k + p];
                                if aip == 0.0 {
                                    continue;
                                }
                                for (d, gv) in db[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                    *d += aip * gv;
                                }
                            }
                        }
                        accumulate(&mut grads, *b, db);
                    }
                }
                Op::AddBias(x, bias) => {
                    if self.rg(*bias) {
                        let n = self.value(*bias).len();
                        let mut db = vec![0.0; n];
                        for row in g.chunks(n) {
                            for (d, v) in db.iter_mut().zip(row) {
                                *d += v;
                            }
                        }
                        accumulate(&mut grads, *bias, db);
                    }
                    if self.rg(*x) {
                        accumulate(&mut grads, *x, g);
                    }
                }
                Op::Add(a, b) => {
                    if self.rg(*a) {
                        accumulate(&mut grads, *a, g.clone());
                    }
                    if self.rg(*b) {
                        accumulate(&mut grads, *b, g);
                    }
                }
                Op::Scale(a, c) => {
                    if self.rg(*a) {
                        accumulate(&mut grads, *a, g.iter().map(|v| v * c).collect());
                    }
                }
                Op::Tanh(a) => {
                    if self.rg(*a) {
                        let y = node.value.values();
                        let da = g.iter().zip(y).map(|(gv, yv)| gv * (1.0 - yv * yv)).collect();
                        accumulate(&mut grads, *a, da);
                    }
                }
                Op::LayerNorm { input, inv_std } => {
                    if self.rg(*input) {
                        let (_, n) = node.value.dims2();
                        let y = node.value.values();
                        let mut dx = vec![0.0; y.len()];
                        for (r, is) in inv_std.iter().enumerate() {
                            let yr = &y[r * n..(r + 1) * n];
                            let gr = &g[r * n..(r + 1) * n];
                            let mean_g = gr.iter().sum::<f64>() / n as f64;
                            let mean_gy = kernels::dot(gr, yr) / n as f64;
                            for j in 0..n {
                                dx[r * n + j] = is * (gr[j] - mean_g - yr[j] * mean_gy);
                            }
                        }
                        accumulate(&mut grads, *input, dx);
                    }
                }
                Op::Softmax { input, temperature } => {
                    if self.rg(*input) {
                        let (_, n) = node.value.dims2();
                        let y = node.value.values();
                        let mut dz = vec![0.0; y.len()];
                        for ((yr, gr), dr) in y.chunks(n).zip(g.chunks(n)).zip(dz.chunks_mut(n)) {
                            let s = kernels::dot(yr, gr);
                            for j in 0..n {
                                dr[j] = yr[j] * (gr[j] - s) / temperature;
                            }
                        }
                        accumulate(&mut grads, *input, dz);
                    }
                }
                Op::CrossEntropy { probs, targets } => {
                    if self.rg(*probs) {
                        let t = self.value(*probs);
                        let (m, k) = t.dims2();
                        let mut dp = vec![0.0; m * k];
                        for (r, &y) in targets.iter().enumerate() {
                            let p = t.row(r)[y];
                            if p > PROB_FLOOR {
                                dp[r * k + y] = -g[0] / (m as f64 * p);
                            }
                        }
                        accumulate(&mut grads, *probs, dp);
                    }
                }
                Op::KlDivergence { p, q } => {
                    if self.rg(*p) {
                        let t = self.value(*p);
                        let (m, _) = t.dims2();
                        let scale = g[0] / m as f64;
                        let dp = t
                            .values()
                            .iter()
                            .zip(q)
                            .map(|(&pi, &qi)| {
                                let lq = qi.max(PROB_FLOOR).ln();
                                let d = if pi > PROB_FLOOR {
                                    pi.ln() + 1.0 - lq
                                } else {
                                    PROB_FLOOR.ln() - lq
                                };
                                scale * d
                            })
                            .collect();
                        accumulate(&mut grads, *p, dp);
                    }
                }
                Op::Sum(a) => {
                    if self.rg(*a) {
                        let n = self.value(*a).len();
                        accumulate(&mut grads, *a, vec![g[0]; n]);
                    }
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, g: Vec<f64>) {
    match &mut grads[v.0] {
        Some(existing) => {
            for (e, x) in existing.iter_mut().zip(g) {
                *e += x;
            }
        }
        slot @ None => *slot = Some(g),
    }
}
