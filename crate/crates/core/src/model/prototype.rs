use crate::error::{Error, Result};
use crate::numerics::kernels;

/// Decay of the streamed prototype average.
pub const PROTOTYPE_DECAY: f64 = 0.99;

/// Exponential moving average of prediction vectors, seeded by the first
/// observation.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeEma {
    decay: f64,
    state: Option<Vec<f64>>,
    count: usize,
}

impl Default for PrototypeEma {
    fn default() -> Self {
        Self::new(PROTOTYPE_DECAY)
    }
}

impl PrototypeEma {
    pub fn new(decay: f64) -> Self {
        Self {
            decay,
            state: None,
            count: 0,
        }
    }

    pub fn update(&mut self, probs: &[f64]) {
        self.count += 1;
        match &mut self.state {
            None => self.state = Some(probs.to_vec()),
            Some(s) => {
                for (a, p) in s.iter_mut().zip(probs) {
                    *a = self.decay * *a + (1.0 - self.decay) * p;
                }
            }
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn raw(&self) -> Option<&[f64]> {
        self.state.as_deref()
    }

    /// Current average scaled to unit L2 norm.
    pub fn normalized(&self) -> Result<Vec<f64>> {
        let s = self
            .state
            .as_ref()
            .ok_or_else(|| Error::Degenerate("no qualifying samples were streamed".into()))?;
        let n = kernels::l2_norm(s);
        if n == 0.0 {
            return Err(Error::Degenerate("prototype average has zero norm".into()));
        }
        Ok(s.iter().map(|v| v / n).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empty_stream_is_degenerate() {
        assert!(PrototypeEma::default().normalized().is_err());
    }

    #[test]
    fn ema_tracks_batch_mean_for_stationary_stream() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let center = [0.05, 0.1, 0.15, 0.3, 0.4];
        let mut ema = PrototypeEma::default();
        let mut sum = [0.0; 5];
        let n = 2000;
        for _ in 0..n {
            let mut p: Vec<f64> = center
                .iter()
                .map(|c| (c + rng.random_range(-0.04..0.04f64)).max(0.0))
                .collect();
            let t: f64 = p.iter().sum();
            p.iter_mut().for_each(|v| *v /= t);
            for (s, v) in sum.iter_mut().zip(&p) {
                *s += v;
            }
            ema.update(&p);
        }
        let batch: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let bn = kernels::l2_norm(&batch);
        let batch: Vec<f64> = batch.iter().map(|v| v / bn).collect();
        let streamed = ema.normalized().unwrap();
        let diff: Vec<f64> = streamed.iter().zip(&batch).map(|(a, b)| a - b).collect();
        let rel = kernels::l2_norm(&diff) / kernels::l2_norm(&batch);
        assert!(rel <= 0.02, "relative deviation {rel}");
    }
}
