//! Teacher training, single-edge distillation and joint multi-stage
//! distillation through a mentor.
//!
//! Every loss is a cross-entropy on the gold class plus weighted
//! `KL(P_model ‖ P_target)` terms. Targets are the current outputs of the
//! larger models, computed outside the graph, so no gradient ever reaches a
//! target model within a step.

mod matrix;
mod report;
mod train;

pub use matrix::{mean_std, run_distill_matrix, DistillMatrix, MatrixRow, Variant};
pub use report::{EpochLoss, Role, TrainReport};
pub use train::{train_kd_single, train_mskd, train_plain, train_teacher, MskdOutcome};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::EvalOptions;
use crate::model::ModelConfig;

/// Mentor weight in the mentor and student objectives.
pub const DEFAULT_PHI: f64 = 0.5;
/// Teacher weight in the student objective.
pub const DEFAULT_PSI: f64 = 0.25;
/// Weight of the single distillation edge.
pub const DEFAULT_LAMBDA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DistillMode {
    TeacherOnly,
    KdSingle,
    MskdJoint,
}

impl std::str::FromStr for DistillMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "teacher" | "teacher_only" => Ok(DistillMode::TeacherOnly),
            "kd" | "kd_single" => Ok(DistillMode::KdSingle),
            "mskd" | "mskd_joint" => Ok(DistillMode::MskdJoint),
            other => Err(Error::Parameter(format!(
                "mode must be teacher, kd or mskd, got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillPlan {
    pub teacher: ModelConfig,
    pub mentor: Option<ModelConfig>,
    pub student: ModelConfig,
    pub phi: f64,
    pub psi: f64,
    pub lambda: f64,
    pub temperature: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub mode: DistillMode,
    pub eval: EvalOptions,
}

impl DistillPlan {
    pub fn validate(&self) -> Result<()> {
        let roles: Vec<(&str, &ModelConfig)> = std::iter::once(("teacher", &self.teacher))
            .chain(self.mentor.as_ref().map(|m| ("mentor", m)))
            .chain(std::iter::once(("student", &self.student)))
            .collect();
        for (name, cfg) in &roles {
            cfg.validate()
                .map_err(|e| Error::Config(format!("{name}: {e}")))?;
            if cfg.input_dim != self.student.input_dim || cfg.num_classes != self.student.num_classes {
                return Err(Error::Config(format!(
                    "{name}: input_dim and num_classes must match across roles"
                )));
            }
        }
        for w in roles.windows(2) {
            if w[0].1.capacity() < w[1].1.capacity() {
                return Err(Error::Config(format!(
                    "capacity ordering: {} (depth·width {}) is smaller than {} ({})",
                    w[0].0,
                    w[0].1.capacity(),
                    w[1].0,
                    w[1].1.capacity()
                )));
            }
        }
        for (name, v) in [("phi", self.phi), ("psi", self.psi), ("lambda", self.lambda)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be a finite value >= 0, got {v}")));
            }
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::Config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.mode == DistillMode::MskdJoint && self.mentor.is_none() {
            return Err(Error::Config(
                "mskd_joint needs a [mentor] model section".into(),
            ));
        }
        Ok(())
    }

    /// Copy with `seed` applied to the schedule and to every role's init.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut p = self.clone();
        p.seed = seed;
        let mix = |k: u64| seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k);
        p.teacher.seed = mix(1);
        if let Some(m) = &mut p.mentor {
            m.seed = mix(2);
        }
        p.student.seed = mix(3);
        p
    }

    pub fn mentor(&self) -> Result<&ModelConfig> {
        self.mentor
            .as_ref()
            .ok_or_else(|| Error::Config("plan has no [mentor] model section".into()))
    }
}
