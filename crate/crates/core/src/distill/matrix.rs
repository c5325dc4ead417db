use std::fmt;
use std::io::Write;

use rayon::prelude::*;

use super::report::Role;
use super::train::{train_kd_single, train_mskd, train_plain};
use super::DistillPlan;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::eval::model_f1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Teacher,
    Mentor,
    StudentNoKd,
    StudentKdMentor,
    StudentKdTeacher,
    StudentMskd,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Teacher,
        Variant::Mentor,
        Variant::StudentNoKd,
        Variant::StudentKdMentor,
        Variant::StudentKdTeacher,
        Variant::StudentMskd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Teacher => "teacher",
            Variant::Mentor => "mentor",
            Variant::StudentNoKd => "student_no_kd",
            Variant::StudentKdMentor => "student_kd_mentor",
            Variant::StudentKdTeacher => "student_kd_teacher",
            Variant::StudentMskd => "student_mskd",
        }
    }

    fn is_student(self) -> bool {
        !matches!(self, Variant::Teacher | Variant::Mentor)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixRow {
    pub variant: Variant,
    /// F1 per seed, in seed order.
    pub f1: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (n − 1); zero for one seed.
    pub std: f64,
    /// `100·(mean − base)/base` against the no-KD student; students only.
    pub improvement_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistillMatrix {
    pub seeds: Vec<u64>,
    pub rows: Vec<MatrixRow>,
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

impl DistillMatrix {
    pub fn row(&self, v: Variant) -> &MatrixRow {
        self.rows
            .iter()
            .find(|r| r.variant == v)
            .expect("matrix holds every variant")
    }

    pub fn mean(&self, v: Variant) -> f64 {
        self.row(v).mean
    }

    /// The better of the two single-edge students by mean F1.
    pub fn best_single_kd(&self) -> &MatrixRow {
        let m = self.row(Variant::StudentKdMentor);
        let t = self.row(Variant::StudentKdTeacher);
        if t.mean > m.mean {
            t
        } else {
            m
        }
    }

    /// `variant,mean_f1,std_f1,improvement_pct,n_seeds`; F1 in points.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e| Error::io("<matrix csv>", e);
        writeln!(w, "variant,mean_f1,std_f1,improvement_pct,n_seeds").map_err(io)?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{:.6},{:.6},{},{}",
                r.variant,
                100.0 * r.mean,
                100.0 * r.std,
                r.improvement_pct.map(|p| format!("{p:.6}")).unwrap_or_default(),
                r.f1.len()
            )
            .map_err(io)?;
        }
        Ok(())
    }

    /// Long form: one row per (variant, seed).
    pub fn write_seeds_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e| Error::io("<matrix csv>", e);
        writeln!(w, "variant,seed,f1").map_err(io)?;
        for r in &self.rows {
            for (s, f) in self.seeds.iter().zip(&r.f1) {
                writeln!(w, "{},{},{:.6}", r.variant, s, 100.0 * f).map_err(io)?;
            }
        }
        Ok(())
    }
}

fn run_seed(plan: &DistillPlan, train: &Dataset, eval_set: &Dataset) -> Result<[f64; 6]> {
    let mentor_cfg = plan.mentor()?.clone();
    let (teacher, _) = train_plain(&plan.teacher, Role::Teacher, plan, train, eval_set)?;
    let (mentor, _) = train_plain(&mentor_cfg, Role::Mentor, plan, train, eval_set)?;
    let (plain, _) = train_plain(&plan.student, Role::Student, plan, train, eval_set)?;
    let (kd_m, _) = train_kd_single(plan, &mentor, Role::Mentor, train, eval_set)?;
    let (kd_t, _) = train_kd_single(plan, &teacher, Role::Teacher, train, eval_set)?;
    let joint = train_mskd(plan, train, eval_set)?;
    let opts = &plan.eval;
    Ok([
        model_f1(&teacher, eval_set, opts)?,
        model_f1(&mentor, eval_set, opts)?,
        model_f1(&plain, eval_set, opts)?,
        model_f1(&kd_m, eval_set, opts)?,
        model_f1(&kd_t, eval_set, opts)?,
        model_f1(&joint.student, eval_set, opts)?,
    ])
}

/// Trains every variant once per seed and summarizes F1 on `eval_set`.
/// Seeds run on `jobs` worker threads; results do not depend on `jobs`.
pub fn run_distill_matrix(
    plan: &DistillPlan,
    train: &Dataset,
    eval_set: &Dataset,
    seeds: &[u64],
    jobs: usize,
) -> Result<DistillMatrix> {
    if seeds.len() < 3 {
        return Err(Error::Parameter(format!(
            "the distillation matrix needs at least 3 seeds, got {}",
            seeds.len()
        )));
    }
    let mut base = plan.clone();
    base.mode = super::DistillMode::MskdJoint;
    base.validate()?;
    base.mentor()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let per_seed: Vec<[f64; 6]> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&s| run_seed(&base.with_seed(s), train, eval_set))
            .collect::<Result<Vec<_>>>()
    })?;

    log::info!("distillation matrix finished over {} seeds", seeds.len());
    Ok(summarize(seeds, &per_seed))
}

fn summarize(seeds: &[u64], per_seed: &[[f64; 6]]) -> DistillMatrix {
    let mut rows: Vec<MatrixRow> = Variant::ALL
        .iter()
        .enumerate()
        .map(|(i, &variant)| {
            let f1: Vec<f64> = per_seed.iter().map(|r| r[i]).collect();
            let (mean, std) = mean_std(&f1);
            MatrixRow {
                variant,
                f1,
                mean,
                std,
                improvement_pct: None,
            }
        })
        .collect();
    let base_mean = rows[2].mean;
    for r in rows.iter_mut().filter(|r| r.variant.is_student()) {
        r.improvement_pct = (base_mean > 0.0).then(|| 100.0 * (r.mean - base_mean) / base_mean);
    }
    DistillMatrix {
        seeds: seeds.to_vec(),
        rows,
    }
}
