use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Teacher,
    Mentor,
    Student,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Teacher => "teacher",
            Role::Mentor => "mentor",
            Role::Student => "student",
        })
    }
}

/// Epoch-mean loss terms of one model. KL terms are raw divergences;
/// `total = ce + w_mentor·kl_mentor + w_teacher·kl_teacher`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub role: Role,
    pub ce: f64,
    pub kl_mentor: Option<f64>,
    pub kl_teacher: Option<f64>,
    pub w_mentor: f64,
    pub w_teacher: f64,
    pub total: f64,
}

impl EpochLoss {
    pub fn recomposed_total(&self) -> f64 {
        self.ce + self.w_mentor * self.kl_mentor.unwrap_or(0.0) + self.w_teacher * self.kl_teacher.unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub losses: Vec<EpochLoss>,
    /// Validation F1 (fraction) of every model trained in the run.
    pub final_f1: Vec<(Role, f64)>,
    pub seed: u64,
    pub wall_seconds: f64,
}

impl TrainReport {
    pub fn losses_for(&self, role: Role) -> impl Iterator<Item = &EpochLoss> {
        self.losses.iter().filter(move |l| l.role == role)
    }

    pub fn f1_of(&self, role: Role) -> Option<f64> {
        self.final_f1.iter().find(|(r, _)| *r == role).map(|(_, f)| *f)
    }

    /// Largest gap between a logged total and the sum of its logged terms.
    pub fn max_decomposition_error(&self) -> f64 {
        self.losses
            .iter()
            .map(|l| (l.total - l.recomposed_total()).abs())
            .fold(0.0, f64::max)
    }

    /// `epoch,model_role,ce,kl_mentor,kl_teacher,total`; absent KL terms are
    /// empty cells.
    pub fn write_loss_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e| Error::io("<loss csv>", e);
        writeln!(w, "epoch,model_role,ce,kl_mentor,kl_teacher,total").map_err(io)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for l in &self.losses {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                l.epoch,
                l.role,
                l.ce,
                opt(l.kl_mentor),
                opt(l.kl_teacher),
                l.total
            )
            .map_err(io)?;
        }
        Ok(())
    }
}
