use crate::error::{Error, Result};
use crate::numerics::graph::{Graph, Var};
use crate::numerics::tensor::Tensor;

/// Smallest denominator used when turning an absolute gradient error into a
/// relative one, so near-zero gradients are compared on an absolute scale.
pub const REL_ERR_FLOOR: f64 = 1e-3;

/// Compares the reverse-mode gradient of a scalar function against central
/// differences and returns the largest relative error over all elements.
///
/// `f` receives a fresh graph and the input as a trainable leaf; it must
/// return a scalar node.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::Parameter(format!(
            "finite-difference step {eps} outside [1e-7, 1e-3]"
        )));
    }
    let eval = |t: &Tensor| -> Result<f64> {
        let mut g = Graph::new();
        let xv = g.constant(t.clone());
        let out = f(&mut g, xv)?;
        scalar_of(&g, out)
    };

    let mut g = Graph::new();
    let xv = g.leaf(x.clone());
    let out = f(&mut g, xv)?;
    scalar_of(&g, out)?;
    let grads = g.backward(out)?;
    let analytic = grads
        .get(xv)
        .map(<[f64]>::to_vec)
        .unwrap_or_else(|| vec![0.0; x.len()]);

    let mut worst: f64 = 0.0;
    let mut probe = x.detached();
    for i in 0..x.len() {
        let orig = probe.values()[i];
        probe.values_mut()[i] = orig + eps;
        let up = eval(&probe)?;
        probe.values_mut()[i] = orig - eps;
        let down = eval(&probe)?;
        probe.values_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let denom = analytic[i].abs().max(numeric.abs()).max(REL_ERR_FLOOR);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    Ok(worst)
}

fn scalar_of(g: &Graph, v: Var) -> Result<f64> {
    let t = g.value(v);
    if t.len() != 1 {
        return Err(Error::Contract(format!(
            "grad_check needs a scalar function, got shape {:?}",
            t.shape()
        )));
    }
    Ok(t.values()[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_sum_is_exact() {
        let x = Tensor::matrix(2, 3, vec![0.1, -2.0, 3.5, 0.0, 7.0, -1.25]).unwrap();
        let err = grad_check(|g, x| Ok(g.sum(x)), &x, 1e-6).unwrap();
        assert!(err <= 1e-9, "{err}");
    }

    #[test]
    fn non_scalar_is_contract_error() {
        let x = Tensor::vector(vec![1.0, 2.0]);
        let r = grad_check(|g, x| Ok(g.tanh(x)), &x, 1e-6);
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn eps_range_enforced() {
        let x = Tensor::vector(vec![1.0, 2.0]);
        assert!(grad_check(|g, x| Ok(g.sum(x)), &x, 1e-2).is_err());
    }
}
