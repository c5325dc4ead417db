//! Plain SGD and the seeded batch schedule shared by every training loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Labeled feature rows: `features` is n×d, one gold class per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Examples {
    features: Tensor,
    labels: Vec<usize>,
}

impl Examples {
    pub fn new(features: Tensor, labels: Vec<usize>) -> Result<Self> {
        let (n, _) = features.dims2();
        if features.shape().len() != 2 || n != labels.len() {
            return Err(Error::Dimension(format!(
                "{} labels for features of shape {:?}",
                labels.len(),
                features.shape()
            )));
        }
        Ok(Self { features, labels })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<usize>) -> Result<Self> {
        let d = rows.first().map(Vec::len).unwrap_or(0);
        if rows.is_empty() || d == 0 {
            return Err(Error::Data("no examples".into()));
        }
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Dimension("ragged feature rows".into()));
        }
        let flat = rows.iter().flatten().copied().collect();
        Self::new(Tensor::matrix(rows.len(), d, flat)?, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.dims2().1
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    pub fn gather(&self, idx: &[usize]) -> (Tensor, Vec<usize>) {
        let d = self.dim();
        let mut flat = Vec::with_capacity(idx.len() * d);
        let mut labels = Vec::with_capacity(idx.len());
        for &i in idx {
            flat.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        (
            Tensor::matrix(idx.len(), d, flat).expect("non-empty batch"),
            labels,
        )
    }
}

/// Shuffled index order for one epoch, a pure function of `(seed, epoch)`.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx
}

/// Mini-batches of one epoch in schedule order.
pub fn epoch_batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    epoch_order(n, seed, epoch)
        .chunks(batch_size.max(1))
        .map(<[usize]>::to_vec)
        .collect()
}

pub fn sgd_step(param: &mut Tensor, grad: &[f64], learning_rate: f64) {
    for (w, g) in param.values_mut().iter_mut().zip(grad) {
        *w -= learning_rate * g;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epoch_order_is_a_seeded_permutation() {
        let a = epoch_order(50, 7, 3);
        assert_eq!(a, epoch_order(50, 7, 3));
        assert_ne!(a, epoch_order(50, 7, 4));
        let mut s = a.clone();
        s.sort();
        assert_eq!(s, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn batches_cover_everything_once() {
        let b = epoch_batches(10, 3, 1, 0);
        assert_eq!(b.len(), 4);
        assert_eq!(b.iter().map(Vec::len).sum::<usize>(), 10);
    }
}
