use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::kernels::{self, PROB_FLOOR};

/// Tolerance on the total mass of a [`Distribution`].
pub const MASS_TOL: f64 = 1e-9;

/// Categorical distribution over K ≥ 2 classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::Parameter(format!(
                "distribution needs K >= 2 classes, got {}",
                probs.len()
            )));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Validation(format!(
                "probabilities must lie in [0, 1]: {probs:?}"
            )));
        }
        let mass: f64 = probs.iter().sum();
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(Error::Validation(format!(
                "probabilities sum to {mass}, not 1"
            )));
        }
        Ok(Self { probs })
    }

    pub fn uniform(classes: usize) -> Result<Self> {
        Self::new(vec![1.0 / classes as f64; classes])
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn classes(&self) -> usize {
        self.probs.len()
    }

    /// Index of the most probable class; ties go to the lower index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    pub(crate) fn from_softmax(probs: Vec<f64>) -> Self {
        Self { probs }
    }
}

pub fn softmax(logits: &[f64], temperature: f64) -> Result<Distribution> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::Parameter(format!(
            "softmax temperature must be positive, got {temperature}"
        )));
    }
    if logits.len() < 2 {
        return Err(Error::Parameter("softmax needs at least 2 classes".into()));
    }
    let probs = kernels::softmax_rows(logits, logits.len(), temperature);
    Ok(Distribution::from_softmax(probs))
}

pub fn cross_entropy(pred: &Distribution, gold: usize) -> Result<f64> {
    let p = pred
        .probs
        .get(gold)
        .ok_or_else(|| Error::Index(format!("gold class {gold} with K={}", pred.classes())))?;
    Ok(-p.max(PROB_FLOOR).ln())
}

/// `KL(p || q)`, both arguments floored before the logarithm.
pub fn kl_divergence(p: &Distribution, q: &Distribution) -> Result<f64> {
    if p.classes() != q.classes() {
        return Err(Error::Dimension(format!(
            "KL between K={} and K={}",
            p.classes(),
            q.classes()
        )));
    }
    let kl: f64 = p
        .probs
        .iter()
        .zip(&q.probs)
        .map(|(&pi, &qi)| pi * (pi.max(PROB_FLOOR).ln() - qi.max(PROB_FLOOR).ln()))
        .sum();
    // Rounding can leave a tiny negative residue when p ≈ q.
    Ok(kl.max(0.0))
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "cosine similarity of lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let na = kernels::l2_norm(a);
    let nb = kernels::l2_norm(b);
    if na == 0.0 || nb == 0.0 || !na.is_finite() || !nb.is_finite() {
        return Err(Error::Degenerate(
            "cosine similarity of a zero-norm vector".into(),
        ));
    }
    Ok((kernels::dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_examples() {
        let d = softmax(&[2.0, 2.0, 2.0, 2.0], 3.7).unwrap();
        for p in d.probs() {
            assert!((p - 0.25).abs() < 1e-15);
        }
        let d = softmax(&[0.0, 3f64.ln()], 1.0).unwrap();
        assert!((d.probs()[0] - 0.25).abs() < 1e-15);
        assert!((d.probs()[1] - 0.75).abs() < 1e-15);
        let d = softmax(&[1000.0, 0.0], 1.0).unwrap();
        assert!((d.probs()[0] - 1.0).abs() < 1e-15);
        assert!(d.probs()[1] < 1e-300);
        assert!(d.probs().iter().all(|p| p.is_finite()));
    }

    #[test]
    fn softmax_rejects_bad_temperature() {
        assert!(matches!(softmax(&[0.0, 1.0], 0.0), Err(Error::Parameter(_))));
        assert!(matches!(softmax(&[0.0, 1.0], -1.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn cross_entropy_examples() {
        let d = Distribution::new(vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(cross_entropy(&d, 1).unwrap(), 0.0);
        let u = Distribution::uniform(5).unwrap();
        for gold in 0..5 {
            assert!((cross_entropy(&u, gold).unwrap() - 5f64.ln()).abs() < 1e-12);
        }
        assert!(matches!(cross_entropy(&u, 5), Err(Error::Index(_))));
        // floored, so a zero on gold stays finite
        assert!((cross_entropy(&d, 0).unwrap() - 1e-12f64.ln().abs()).abs() < 1e-9);
    }

    #[test]
    fn kl_examples() {
        let p = Distribution::new(vec![0.2, 0.3, 0.5]).unwrap();
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        let a = Distribution::new(vec![1.0, 0.0]).unwrap();
        let b = Distribution::new(vec![0.5, 0.5]).unwrap();
        assert!((kl_divergence(&a, &b).unwrap() - 2f64.ln()).abs() < 1e-15);
        let c = Distribution::uniform(3).unwrap();
        assert!(matches!(kl_divergence(&a, &c), Err(Error::Dimension(_))));
    }

    #[test]
    fn cosine_examples() {
        let a = [0.3, -1.2, 2.0];
        assert!((cosine_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        assert!(cosine_similarity(&[1.0, 0.0], &[0.0, 2.0]).unwrap().abs() < 1e-15);
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        assert!((cosine_similarity(&a, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn distribution_validation() {
        assert!(Distribution::new(vec![1.0]).is_err());
        assert!(Distribution::new(vec![0.5, 0.6]).is_err());
        assert!(Distribution::new(vec![-0.1, 1.1]).is_err());
        assert_eq!(Distribution::new(vec![0.2, 0.5, 0.3]).unwrap().argmax(), 1);
    }
}
