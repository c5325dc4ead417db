use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of an exitable classifier.
///
/// `exit_depths` lists the backbone depth after which each exit head sits;
/// the last entry must equal `depth`, so the final head is the full path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub depth: usize,
    pub exit_depths: Vec<usize>,
    pub num_classes: usize,
    pub seed: u64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, why: String| Err(Error::Config(format!("{field}: {why}")));
        if self.input_dim == 0 {
            return fail("input_dim", "must be >= 1".into());
        }
        if self.hidden_dim == 0 {
            return fail("hidden_dim", "must be >= 1".into());
        }
        if self.depth == 0 {
            return fail("depth", "must be >= 1".into());
        }
        if self.num_classes < 2 {
            return fail("num_classes", format!("must be >= 2, got {}", self.num_classes));
        }
        if self.exit_depths.is_empty() {
            return fail("exit_depths", "need at least one exit".into());
        }
        if self.exit_depths[0] < 1 {
            return fail("exit_depths", "first exit depth must be >= 1".into());
        }
        if self.exit_depths.windows(2).any(|w| w[0] >= w[1]) {
            return fail(
                "exit_depths",
                format!("must be strictly increasing, got {:?}", self.exit_depths),
            );
        }
        if *self.exit_depths.last().unwrap() != self.depth {
            return fail(
                "exit_depths",
                format!(
                    "last exit depth {} must equal depth {}",
                    self.exit_depths.last().unwrap(),
                    self.depth
                ),
            );
        }
        Ok(())
    }

    pub fn num_exits(&self) -> usize {
        self.exit_depths.len()
    }

    /// Inner width of each backbone block.
    pub fn block_inner(&self) -> usize {
        2 * self.hidden_dim
    }

    /// Inner width of the lightweight block inside each exit head.
    pub fn head_inner(&self) -> usize {
        self.hidden_dim.div_ceil(4)
    }

    /// Capacity measure used to order teacher, mentor and student.
    pub fn capacity(&self) -> usize {
        self.depth * self.hidden_dim
    }

    /// Classes whose members feed the summary prototype: those whose
    /// 1-based score is at least 80% of the top score. For K=5 this is
    /// scores {4, 5}; for K=2 it is the positive class.
    pub fn high_importance_classes(&self) -> Vec<usize> {
        high_importance_classes(self.num_classes)
    }
}

pub fn high_importance_classes(num_classes: usize) -> Vec<usize> {
    (0..num_classes)
        .filter(|k| 5 * (k + 1) >= 4 * num_classes)
        .collect()
}
