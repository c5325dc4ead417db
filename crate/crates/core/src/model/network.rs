//! Parameter layout and the two forward paths (plain kernels and graph).
//!
//! The parameter structs are generic over the leaf type so the same layout
//! holds tensors for storage and graph handles during training.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::numerics::kernels;
use crate::numerics::{Graph, Tensor, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct Affine<P = Tensor> {
    pub weight: P,
    pub bias: P,
}

/// Pre-norm residual unit: `h + down(tanh(up(ln(h))))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Block<P = Tensor> {
    pub up: Affine<P>,
    pub down: Affine<P>,
}

/// One lightweight block followed by a normalized affine classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ExitHead<P = Tensor> {
    pub block: Block<P>,
    pub classifier: Affine<P>,
}

impl<P> Affine<P> {
    pub fn map<Q>(&self, f: &mut impl FnMut(&P) -> Q) -> Affine<Q> {
        Affine {
            weight: f(&self.weight),
            bias: f(&self.bias),
        }
    }

    pub fn params(&self) -> [&P; 2] {
        [&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> [&mut P; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

impl<P> Block<P> {
    pub fn map<Q>(&self, f: &mut impl FnMut(&P) -> Q) -> Block<Q> {
        Block {
            up: self.up.map(f),
            down: self.down.map(f),
        }
    }

    pub fn params(&self) -> Vec<&P> {
        self.up.params().into_iter().chain(self.down.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut P> {
        let [a, b] = self.up.params_mut();
        let [c, d] = self.down.params_mut();
        vec![a, b, c, d]
    }
}

impl<P> ExitHead<P> {
    pub fn map<Q>(&self, f: &mut impl FnMut(&P) -> Q) -> ExitHead<Q> {
        ExitHead {
            block: self.block.map(f),
            classifier: self.classifier.map(f),
        }
    }

    pub fn params(&self) -> Vec<&P> {
        let mut v = self.block.params();
        v.extend(self.classifier.params());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut P> {
        let mut v = self.block.params_mut();
        let [w, b] = self.classifier.params_mut();
        v.push(w);
        v.push(b);
        v
    }
}

pub(crate) fn init_affine(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Affine {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-bound..=bound)).collect() };
    let weight = Tensor::matrix(fan_in, fan_out, draw(fan_in * fan_out)).expect("positive dims");
    let bias = Tensor::vector(draw(fan_out));
    Affine { weight, bias }
}

pub(crate) fn init_block(rng: &mut ChaCha8Rng, width: usize, inner: usize) -> Block {
    Block {
        up: init_affine(rng, width, inner),
        down: init_affine(rng, inner, width),
    }
}

// ---- plain kernel path -------------------------------------------------

impl Affine {
    pub fn apply_rows(&self, x: &[f64]) -> Vec<f64> {
        let (k, n) = self.weight.dims2();
        let m = x.len() / k;
        let mut out = kernels::matmul(x, self.weight.values(), m, k, n);
        kernels::add_bias_rows(&mut out, self.bias.values());
        out
    }
}

impl Block {
    pub fn apply_rows(&self, h: &[f64]) -> Vec<f64> {
        let (width, _) = self.up.weight.dims2();
        let (normed, _) = kernels::layer_norm_rows(h, width);
        let mut inner = self.up.apply_rows(&normed);
        kernels::tanh_inplace(&mut inner);
        let delta = self.down.apply_rows(&inner);
        h.iter().zip(delta).map(|(a, b)| a + b).collect()
    }
}

impl ExitHead {
    pub fn logits_rows(&self, h: &[f64]) -> Vec<f64> {
        let (width, _) = self.block.up.weight.dims2();
        let z = self.block.apply_rows(h);
        let (normed, _) = kernels::layer_norm_rows(&z, width);
        self.classifier.apply_rows(&normed)
    }
}

// ---- graph path --------------------------------------------------------

pub(crate) fn affine_graph(g: &mut Graph, a: &Affine<Var>, x: Var) -> Result<Var> {
    let y = g.matmul(x, a.weight)?;
    g.add_bias(y, a.bias)
}

pub(crate) fn block_graph(g: &mut Graph, b: &Block<Var>, h: Var) -> Result<Var> {
    let n = g.layer_norm(h);
    let u = affine_graph(g, &b.up, n)?;
    let t = g.tanh(u);
    let d = affine_graph(g, &b.down, t)?;
    g.add(h, d)
}

pub(crate) fn head_graph(g: &mut Graph, head: &ExitHead<Var>, h: Var) -> Result<Var> {
    let z = block_graph(g, &head.block, h)?;
    let n = g.layer_norm(z);
    affine_graph(g, &head.classifier, n)
}
