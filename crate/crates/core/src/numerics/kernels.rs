//! Plain slice kernels shared by the autodiff graph and the inference path.
//!
//! Both paths call the same functions in the same order, so a batched graph
//! forward and a single-sample inference forward produce bitwise-identical
//! rows.

/// Probability floor applied before every logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// Epsilon inside the layer-norm variance.
pub const LN_EPS: f64 = 1e-5;

/// `out[m×n] = a[m×k] · b[k×n]`, accumulated in k order per output row.
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `x · w + bias` for a single row vector.
pub fn affine_row(x: &[f64], w: &[f64], bias: &[f64]) -> Vec<f64> {
    let n = bias.len();
    let mut out = matmul(x, w, 1, x.len(), n);
    for (o, b) in out.iter_mut().zip(bias) {
        *o += b;
    }
    out
}

pub fn add_bias_rows(x: &mut [f64], bias: &[f64]) {
    let n = bias.len();
    for row in x.chunks_mut(n) {
        for (o, b) in row.iter_mut().zip(bias) {
            *o += b;
        }
    }
}

pub fn tanh_inplace(x: &mut [f64]) {
    for v in x.iter_mut() {
        *v = v.tanh();
    }
}

/// Row-wise layer normalization without affine parameters.
/// Returns the normalized rows and each row's inverse standard deviation.
pub fn layer_norm_rows(x: &[f64], cols: usize) -> (Vec<f64>, Vec<f64>) {
    let mut out = vec![0.0; x.len()];
    let mut inv_std = Vec::with_capacity(x.len() / cols);
    for (row, orow) in x.chunks(cols).zip(out.chunks_mut(cols)) {
        let mean = row.iter().sum::<f64>() / cols as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
        let is = 1.0 / (var + LN_EPS).sqrt();
        for (o, v) in orow.iter_mut().zip(row) {
            *o = (v - mean) * is;
        }
        inv_std.push(is);
    }
    (out, inv_std)
}

/// Row-wise softmax of `logits / temperature` with max subtraction.
pub fn softmax_rows(logits: &[f64], cols: usize, temperature: f64) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    for (row, orow) in logits.chunks(cols).zip(out.chunks_mut(cols)) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (o, v) in orow.iter_mut().zip(row) {
            *o = ((v - max) / temperature).exp();
            total += *o;
        }
        for o in orow.iter_mut() {
            *o /= total;
        }
    }
    out
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
