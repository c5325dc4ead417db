use std::time::Instant;

use super::report::{EpochLoss, Role, TrainReport};
use super::DistillPlan;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::eval::model_f1;
use crate::model::{ExitableModel, ModelConfig, PrototypeEma};
use crate::numerics::{Graph, Tensor};
use crate::optim::{epoch_batches, Examples};

/// A frozen distillation target for one batch.
struct Target {
    probs: Tensor,
    weight: f64,
}

struct StepLoss {
    ce: f64,
    kls: Vec<f64>,
    total: f64,
}

/// One SGD step on `CE + Σ w_j · KL(P_model ‖ target_j)`.
fn sgd_step(
    model: &mut ExitableModel,
    x: &Tensor,
    y: &[usize],
    targets: &[Target],
    temperature: f64,
    learning_rate: f64,
    ema: &mut PrototypeEma,
) -> Result<StepLoss> {
    let mut g = Graph::new();
    let (vars, logits) = model.backbone_graph(&mut g, x)?;
    let probs = g.softmax(logits, 1.0)?;
    let ce = g.cross_entropy(probs, y)?;
    let soft = if targets.is_empty() || temperature == 1.0 {
        probs
    } else {
        g.softmax(logits, temperature)?
    };
    let mut loss = ce;
    let mut kls = Vec::with_capacity(targets.len());
    for t in targets {
        let kl = g.kl_divergence(soft, &t.probs)?;
        kls.push(g.value(kl).values()[0]);
        let weighted = g.scale(kl, t.weight);
        loss = g.add(loss, weighted)?;
    }
    let step = StepLoss {
        ce: g.value(ce).values()[0],
        kls,
        total: g.value(loss).values()[0],
    };
    if !step.total.is_finite() {
        return Err(Error::Contract("non-finite training loss".into()));
    }

    let positive = model.config().high_importance_classes();
    let k = model.num_classes();
    for (row, label) in g.value(probs).values().chunks(k).zip(y) {
        if positive.contains(label) {
            ema.update(row);
        }
    }

    let mut grads = g.backward(loss)?;
    model.apply_backbone_grads(&vars, &mut grads, learning_rate);
    Ok(step)
}

/// Running epoch means of the logged loss terms.
struct EpochAccumulator {
    role: Role,
    w_mentor: f64,
    w_teacher: f64,
    has_mentor: bool,
    has_teacher: bool,
    ce: f64,
    kl_mentor: f64,
    kl_teacher: f64,
    total: f64,
    batches: usize,
}

impl EpochAccumulator {
    fn new(role: Role, mentor: Option<f64>, teacher: Option<f64>) -> Self {
        Self {
            role,
            w_mentor: mentor.unwrap_or(0.0),
            w_teacher: teacher.unwrap_or(0.0),
            has_mentor: mentor.is_some(),
            has_teacher: teacher.is_some(),
            ce: 0.0,
            kl_mentor: 0.0,
            kl_teacher: 0.0,
            total: 0.0,
            batches: 0,
        }
    }

    /// `kls` holds the mentor term first when present, then the teacher term.
    fn add(&mut self, s: &StepLoss) {
        self.ce += s.ce;
        let mut it = s.kls.iter();
        if self.has_mentor {
            self.kl_mentor += it.next().copied().unwrap_or(0.0);
        }
        if self.has_teacher {
            self.kl_teacher += it.next().copied().unwrap_or(0.0);
        }
        self.total += s.total;
        self.batches += 1;
    }

    fn finish(&mut self, epoch: usize) -> EpochLoss {
        let n = self.batches.max(1) as f64;
        let out = EpochLoss {
            epoch,
            role: self.role,
            ce: self.ce / n,
            kl_mentor: self.has_mentor.then(|| self.kl_mentor / n),
            kl_teacher: self.has_teacher.then(|| self.kl_teacher / n),
            w_mentor: self.w_mentor,
            w_teacher: self.w_teacher,
            total: self.total / n,
        };
        self.ce = 0.0;
        self.kl_mentor = 0.0;
        self.kl_teacher = 0.0;
        self.total = 0.0;
        self.batches = 0;
        out
    }
}

fn examples_of(data: &Dataset) -> Result<Examples> {
    if data.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    data.examples()
}

fn finish_model(model: &mut ExitableModel, ema: &PrototypeEma) {
    model.mark_trained();
    if let Ok(q) = ema.normalized() {
        // streamed prototype; a later batch finalization may replace it
        let _ = model.set_prototype(&q);
    }
}

/// Cross-entropy training of a single model from its config.
pub fn train_plain(
    config: &ModelConfig,
    role: Role,
    plan: &DistillPlan,
    train: &Dataset,
    val: &Dataset,
) -> Result<(ExitableModel, TrainReport)> {
    let start = Instant::now();
    let ex = examples_of(train)?;
    let mut model = ExitableModel::init(config.clone())?;
    let mut ema = PrototypeEma::default();
    let mut acc = EpochAccumulator::new(role, None, None);
    let mut losses = Vec::with_capacity(plan.epochs);
    for epoch in 0..plan.epochs {
        for batch in epoch_batches(ex.len(), plan.batch_size, plan.seed, epoch) {
            let (x, y) = ex.gather(&batch);
            let s = sgd_step(&mut model, &x, &y, &[], plan.temperature, plan.learning_rate, &mut ema)?;
            acc.add(&s);
        }
        losses.push(acc.finish(epoch));
    }
    finish_model(&mut model, &ema);
    let f1 = model_f1(&model, val, &plan.eval)?;
    Ok((
        model,
        TrainReport {
            losses,
            final_f1: vec![(role, f1)],
            seed: plan.seed,
            wall_seconds: start.elapsed().as_secs_f64(),
        },
    ))
}

/// Teacher objective: cross-entropy on gold labels only.
pub fn train_teacher(plan: &DistillPlan, train: &Dataset, val: &Dataset) -> Result<(ExitableModel, TrainReport)> {
    plan.validate()?;
    train_plain(&plan.teacher, Role::Teacher, plan, train, val)
}

/// Student objective `CE + λ·KL(P_student ‖ P_target)` with a fixed,
/// already-trained target. `source` names the target's role for logging.
pub fn train_kd_single(
    plan: &DistillPlan,
    target: &ExitableModel,
    source: Role,
    train: &Dataset,
    val: &Dataset,
) -> Result<(ExitableModel, TrainReport)> {
    plan.validate()?;
    if !target.is_trained() {
        return Err(Error::Lifecycle(
            "distillation target has not been trained".into(),
        ));
    }
    if target.num_classes() != plan.student.num_classes || target.config().input_dim != plan.student.input_dim {
        return Err(Error::Config("target and student disagree on input_dim or num_classes".into()));
    }
    let start = Instant::now();
    let ex = examples_of(train)?;
    let mut student = ExitableModel::init(plan.student.clone())?;
    let mut ema = PrototypeEma::default();
    let (wm, wt) = match source {
        Role::Mentor => (Some(plan.lambda), None),
        _ => (None, Some(plan.lambda)),
    };
    let mut acc = EpochAccumulator::new(Role::Student, wm, wt);
    let mut losses = Vec::with_capacity(plan.epochs);
    for epoch in 0..plan.epochs {
        for batch in epoch_batches(ex.len(), plan.batch_size, plan.seed, epoch) {
            let (x, y) = ex.gather(&batch);
            let targets = [Target {
                probs: target.predict_rows(&x, plan.temperature)?,
                weight: plan.lambda,
            }];
            let s = sgd_step(&mut student, &x, &y, &targets, plan.temperature, plan.learning_rate, &mut ema)?;
            acc.add(&s);
        }
        losses.push(acc.finish(epoch));
    }
    finish_model(&mut student, &ema);
    let f1 = model_f1(&student, val, &plan.eval)?;
    Ok((
        student,
        TrainReport {
            losses,
            final_f1: vec![(Role::Student, f1)],
            seed: plan.seed,
            wall_seconds: start.elapsed().as_secs_f64(),
        },
    ))
}

#[derive(Debug, Clone)]
pub struct MskdOutcome {
    pub teacher: ExitableModel,
    pub mentor: ExitableModel,
    pub student: ExitableModel,
    pub report: TrainReport,
}

/// Joint training of teacher, mentor and student on a shared batch
/// schedule. Each iteration updates the teacher on CE, then the mentor on
/// `CE + φ·KL(P_m ‖ P_t)`, then the student on
/// `CE + φ·KL(P_s ‖ P_m) + ψ·KL(P_s ‖ P_t)`, where each target is the
/// current (just updated) model's output held fixed for the step.
pub fn train_mskd(plan: &DistillPlan, train: &Dataset, val: &Dataset) -> Result<MskdOutcome> {
    plan.validate()?;
    let mentor_cfg = plan.mentor()?;
    let start = Instant::now();
    let ex = examples_of(train)?;
    let mut teacher = ExitableModel::init(plan.teacher.clone())?;
    let mut mentor = ExitableModel::init(mentor_cfg.clone())?;
    let mut student = ExitableModel::init(plan.student.clone())?;
    let mut emas = [PrototypeEma::default(), PrototypeEma::default(), PrototypeEma::default()];
    let mut acc_t = EpochAccumulator::new(Role::Teacher, None, None);
    let mut acc_m = EpochAccumulator::new(Role::Mentor, None, Some(plan.phi));
    let mut acc_s = EpochAccumulator::new(Role::Student, Some(plan.phi), Some(plan.psi));
    let mut losses = Vec::with_capacity(3 * plan.epochs);
    let (temp, lr) = (plan.temperature, plan.learning_rate);
    for epoch in 0..plan.epochs {
        for batch in epoch_batches(ex.len(), plan.batch_size, plan.seed, epoch) {
            let (x, y) = ex.gather(&batch);
            let s = sgd_step(&mut teacher, &x, &y, &[], temp, lr, &mut emas[0])?;
            acc_t.add(&s);

            let teacher_probs = teacher.predict_rows(&x, temp)?;
            let targets = [Target {
                probs: teacher_probs.clone(),
                weight: plan.phi,
            }];
            let s = sgd_step(&mut mentor, &x, &y, &targets, temp, lr, &mut emas[1])?;
            acc_m.add(&s);

            let targets = [
                Target {
                    probs: mentor.predict_rows(&x, temp)?,
                    weight: plan.phi,
                },
                Target {
                    probs: teacher_probs,
                    weight: plan.psi,
                },
            ];
            let s = sgd_step(&mut student, &x, &y, &targets, temp, lr, &mut emas[2])?;
            acc_s.add(&s);
        }
        losses.push(acc_t.finish(epoch));
        losses.push(acc_m.finish(epoch));
        losses.push(acc_s.finish(epoch));
    }
    finish_model(&mut teacher, &emas[0]);
    finish_model(&mut mentor, &emas[1]);
    finish_model(&mut student, &emas[2]);
    let final_f1 = vec![
        (Role::Teacher, model_f1(&teacher, val, &plan.eval)?),
        (Role::Mentor, model_f1(&mentor, val, &plan.eval)?),
        (Role::Student, model_f1(&student, val, &plan.eval)?),
    ];
    Ok(MskdOutcome {
        teacher,
        mentor,
        student,
        report: TrainReport {
            losses,
            final_f1,
            seed: plan.seed,
            wall_seconds: start.elapsed().as_secs_f64(),
        },
    })
}
