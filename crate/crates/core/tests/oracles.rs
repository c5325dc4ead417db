//! Independent re-derivations of values the library computes.

use kdexit::cli::{generate_splits, RunConfig};
use kdexit::data::{generate, planted_latent, DatasetHeader, FeatureDims, PlantedSpec, SCORE_CENTER, SCORE_SPREAD};
use kdexit::distill::{train_kd_single, train_mskd, train_plain, Role};

fn small() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.data.num_videos = 20;
    cfg.data.segments_per_video = 20;
    cfg.distill.epochs = 3;
    cfg
}

#[test]
fn noiseless_scores_follow_the_stored_latent() {
    let spec = PlantedSpec {
        label_noise: 0.0,
        disagreement: 0.0,
        ..RunConfig::default().planted
    };
    let header = DatasetHeader::new(FeatureDims::default(), 5, 3);
    let d = generate(&spec, &header, 10, 30, 17).unwrap();
    // recompute from what a reader of the file sees: header parameters and features
    let params = d.header.generator.as_ref().unwrap();
    for s in &d.samples {
        let u = planted_latent(params, s.features.as_ref().unwrap());
        let expect = (SCORE_CENTER + SCORE_SPREAD * u).round().clamp(1.0, 5.0) as u8;
        assert!(s.gold_scores.iter().all(|&g| g == expect), "{}#{}", s.video_id, s.segment_index);
    }
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn speaker_channel_carries_no_signal() {
    let cfg = RunConfig::default();
    let header = DatasetHeader::new(cfg.data.dims, 5, cfg.data.annotators);
    let d = generate(&cfg.planted, &header, 200, 60, 3).unwrap();
    assert!(d.len() >= 10_000);
    let target: Vec<f64> = d.samples.iter().map(|s| s.mean_score()).collect();
    for j in 0..cfg.data.dims.sd {
        let x: Vec<f64> = d.samples.iter().map(|s| s.features.as_ref().unwrap().sd[j]).collect();
        let r = pearson(&x, &target);
        assert!(r.abs() <= 0.05, "Sd feature {j} correlates at {r}");
    }
    // the visual channel, by contrast, is informative
    let params = d.header.generator.as_ref().unwrap();
    let v_dir = &params.directions[0];
    let proj: Vec<f64> = d
        .samples
        .iter()
        .map(|s| s.features.as_ref().unwrap().v.iter().zip(v_dir).map(|(a, b)| a * b).sum())
        .collect();
    assert!(pearson(&proj, &target) > 0.2);
}

#[test]
fn teacher_fits_separable_data() {
    let mut cfg = RunConfig::default();
    cfg.planted = PlantedSpec {
        label_noise: 0.0,
        disagreement: 0.0,
        nonlinear: false,
        ..cfg.planted
    };
    cfg.data.num_classes = 2;
    cfg.data.num_videos = 60;
    cfg.data.segments_per_video = 50;
    cfg.distill.epochs = 40;
    cfg.distill.learning_rate = 0.05;
    let [train, _, test] = generate_splits(&cfg).unwrap();
    let plan = cfg.plan().unwrap();
    let (teacher, _) = train_plain(&plan.teacher, Role::Teacher, &plan, &train, &test).unwrap();
    let ex = test.examples().unwrap();
    let probs = teacher.predict_rows(ex.features(), 1.0).unwrap();
    let correct = probs
        .values()
        .chunks(2)
        .zip(ex.labels())
        .filter(|(p, &y)| usize::from(p[1] > p[0]) == y)
        .count();
    let acc = correct as f64 / ex.len() as f64;
    assert!(acc >= 0.95, "teacher accuracy {acc}");
}

#[test]
fn logged_totals_recompose_from_their_terms() {
    let cfg = small();
    let [train, val, _] = generate_splits(&cfg).unwrap();
    let plan = cfg.plan().unwrap();
    let out = train_mskd(&plan, &train, &val).unwrap();
    assert_eq!(out.report.losses.len(), 3 * plan.epochs);
    assert!(out.report.max_decomposition_error() <= 1e-9);
    for l in out.report.losses_for(Role::Student) {
        assert_eq!((l.w_mentor, l.w_teacher), (0.5, 0.25));
        assert!(l.kl_mentor.unwrap() >= 0.0 && l.kl_teacher.unwrap() >= 0.0);
    }
    for l in out.report.losses_for(Role::Mentor) {
        assert!(l.kl_mentor.is_none() && l.kl_teacher.is_some());
    }
}

#[test]
fn distillation_leaves_the_target_untouched() {
    let cfg = small();
    let [train, val, _] = generate_splits(&cfg).unwrap();
    let plan = cfg.plan().unwrap();
    let (teacher, _) = train_plain(&plan.teacher, Role::Teacher, &plan, &train, &val).unwrap();
    let before = teacher.parameter_checksum();
    let snapshot = teacher.clone();
    let (student, report) = train_kd_single(&plan, &teacher, Role::Teacher, &train, &val).unwrap();
    assert_eq!(teacher.parameter_checksum(), before);
    assert_eq!(teacher, snapshot);
    assert!(student.is_trained());
    assert!(report.losses.iter().all(|l| l.kl_teacher.is_some() && l.kl_mentor.is_none()));
}

#[test]
fn kd_requires_a_trained_target() {
    let cfg = small();
    let [train, val, _] = generate_splits(&cfg).unwrap();
    let plan = cfg.plan().unwrap();
    let fresh = kdexit::model::ExitableModel::init(plan.teacher.clone()).unwrap();
    let err = train_kd_single(&plan, &fresh, Role::Teacher, &train, &val).unwrap_err();
    assert_eq!(err.code(), "E_LIFECYCLE");
}

#[test]
fn training_is_deterministic_per_seed() {
    let cfg = small();
    let [train, val, _] = generate_splits(&cfg).unwrap();
    let plan = cfg.plan().unwrap();
    let a = train_mskd(&plan, &train, &val).unwrap();
    let b = train_mskd(&plan, &train, &val).unwrap();
    assert_eq!(a.student.parameter_checksum(), b.student.parameter_checksum());
    let c = train_mskd(&plan.with_seed(plan.seed + 1), &train, &val).unwrap();
    assert_ne!(a.student.parameter_checksum(), c.student.parameter_checksum());
}
