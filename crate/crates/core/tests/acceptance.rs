//! End-to-end acceptance run. Each criterion prints one `PASS`/`FAIL` line
//! (written straight to stderr so it shows without `--nocapture`); the test
//! fails if any criterion fails. Criteria run sequentially so timing
//! measurements are not disturbed by sibling tests.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use clap::Parser;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kdexit::cli::{generate_splits, run, Cli, RunConfig};
use kdexit::distill::{run_distill_matrix, train_kd_single, train_mskd, train_plain, DistillPlan, Role, Variant};
use kdexit::earlyexit::{parse_tau_grid, route_dataset, select_tau, sweep_tau, RoutingPolicy};
use kdexit::eval::tables::{default_keep_sets, run_ablation_table, run_tradeoff_table};
use kdexit::eval::{f1_against_reference, select_summary, VALUE_TOL};
use kdexit::model::ExitableModel;
use kdexit::numerics::gradcheck::grad_check;
use kdexit::numerics::{Graph, Tensor, Var};

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(n: usize, title: &str, start: Instant, out: &Outcome) {
    let line = format!(
        "criterion {n} [{}] {title}: {} ({:.1} s)\n",
        if out.pass { "PASS" } else { "FAIL" },
        out.detail,
        start.elapsed().as_secs_f64()
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn small_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.data.num_videos = 20;
    cfg.data.segments_per_video = 20;
    cfg.distill.epochs = 3;
    cfg.distill.matrix_seeds = 3;
    cfg.ablate.seeds = 3;
    cfg.exit.tau_sweep = "0:1:0.1".into();
    cfg.exit.calib_epochs = 2;
    cfg.exit.repetitions = 3;
    cfg
}

fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
    let v = (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
    Tensor::matrix(rows, cols, v).unwrap()
}

fn random_probs(rng: &mut ChaCha8Rng, rows: usize, k: usize) -> Tensor {
    let mut v = Vec::with_capacity(rows * k);
    for _ in 0..rows {
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
        let s: f64 = raw.iter().sum();
        v.extend(raw.iter().map(|x| x / s));
    }
    Tensor::matrix(rows, k, v).unwrap()
}

/// Scalar readout `Σ out ⊙ w` so every output element carries a distinct weight.
fn readout(g: &mut Graph, out: Var, w: &Tensor) -> kdexit::Result<Var> {
    let c = g.constant(w.clone());
    let m = g.matmul(out, c)?;
    Ok(g.sum(m))
}

fn criterion_gradients() -> Outcome {
    const INSTANCES: usize = 100;
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: Vec<(&str, f64)> = Vec::new();
    let mut record = |name: &'static str, e: f64| match worst.iter_mut().find(|(n, _)| *n == name) {
        Some(w) => w.1 = w.1.max(e),
        None => worst.push((name, e)),
    };
    for _ in 0..INSTANCES {
        let (b, d, k) = (rng.random_range(1..5), rng.random_range(2..6), rng.random_range(2..6));
        let x = random_tensor(&mut rng, b, d, 2.0);
        let w = random_tensor(&mut rng, d, k, 1.0);
        let bias = random_tensor(&mut rng, 1, d, 1.0);
        let wd = random_tensor(&mut rng, d, 1, 1.0);
        let wk = random_tensor(&mut rng, k, 1, 1.0);
        let other = random_tensor(&mut rng, b, d, 1.0);
        let y: Vec<usize> = (0..b).map(|_| rng.random_range(0..k)).collect();
        let q_m = random_probs(&mut rng, b, k);
        let q_t = random_probs(&mut rng, b, k);
        let eps = 1e-6;
        let check = |f: &dyn Fn(&mut Graph, Var) -> kdexit::Result<Var>, at: &Tensor| grad_check(f, at, eps).unwrap();

        record("matmul", check(&|g, v| {
            let c = g.constant(w.clone());
            let o = g.matmul(v, c)?;
            readout(g, o, &wk)
        }, &x));
        record("add_bias", check(&|g, v| {
            let c = g.constant(x.clone());
            let o = g.add_bias(c, v)?;
            readout(g, o, &wd)
        }, &bias));
        record("add", check(&|g, v| {
            let c = g.constant(other.clone());
            let o = g.add(v, c)?;
            readout(g, o, &wd)
        }, &x));
        record("scale", check(&|g, v| {
            let o = g.scale(v, -1.7);
            readout(g, o, &wd)
        }, &x));
        record("tanh", check(&|g, v| {
            let o = g.tanh(v);
            readout(g, o, &wd)
        }, &x));
        record("layer_norm", check(&|g, v| {
            let o = g.layer_norm(v);
            readout(g, o, &wd)
        }, &x));
        for (name, t) in [("softmax T=1", 1.0), ("softmax T=2", 2.0)] {
            record(name, check(&|g, v| {
                let o = g.softmax(v, t)?;
                readout(g, o, &wd)
            }, &x));
        }
        record("sum", check(&|g, v| Ok(g.sum(v)), &x));

        let logits = |g: &mut Graph, v: Var| {
            let c = g.constant(x.clone());
            g.matmul(c, v)
        };
        record("cross_entropy", check(&|g, v| {
            let z = logits(g, v)?;
            let p = g.softmax(z, 1.0)?;
            g.cross_entropy(p, &y)
        }, &w));
        record("kl_divergence", check(&|g, v| {
            let z = logits(g, v)?;
            let p = g.softmax(z, 1.0)?;
            g.kl_divergence(p, &q_t)
        }, &w));
        // teacher: CE only
        record("teacher loss", check(&|g, v| {
            let z = logits(g, v)?;
            let p = g.softmax(z, 1.0)?;
            g.cross_entropy(p, &y)
        }, &w));
        // mentor: CE + φ·KL to the teacher, φ = 0.5, at T = 1 and T = 2
        for t in [1.0, 2.0] {
            record("mentor loss", check(&|g, v| {
                let z = logits(g, v)?;
                let p = g.softmax(z, 1.0)?;
                let ce = g.cross_entropy(p, &y)?;
                let s = g.softmax(z, t)?;
                let kl = g.kl_divergence(s, &q_t)?;
                let kl = g.scale(kl, 0.5);
                g.add(ce, kl)
            }, &w));
        }
        // student: CE + φ·KL to the mentor + ψ·KL to the teacher
        record("student loss", check(&|g, v| {
            let z = logits(g, v)?;
            let p = g.softmax(z, 1.0)?;
            let ce = g.cross_entropy(p, &y)?;
            let a = g.kl_divergence(p, &q_m)?;
            let a = g.scale(a, 0.5);
            let b2 = g.kl_divergence(p, &q_t)?;
            let b2 = g.scale(b2, 0.25);
            let s = g.add(ce, a)?;
            g.add(s, b2)
        }, &w));
    }
    let max = worst.iter().map(|w| w.1).fold(0.0, f64::max);
    let (name, _) = worst.iter().copied().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    Outcome {
        pass: max <= 1e-4,
        detail: format!(
            "{} checks x {INSTANCES} instances, max relative error {max:.2e} ({name})",
            worst.len()
        ),
    }
}

fn brute_force_knapsack(scores: &[f64], durations: &[u32], cap: u64) -> Vec<usize> {
    let n = scores.len();
    let mut best: Option<(f64, Vec<bool>)> = None;
    for mask in 0u32..(1 << n) {
        let take: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
        let dur: u64 = (0..n).filter(|&i| take[i]).map(|i| durations[i] as u64).sum();
        if dur > cap {
            continue;
        }
        let value: f64 = (0..n).filter(|&i| take[i]).map(|i| scores[i]).sum();
        let better = match &best {
            None => true,
            // integer-valued scores make these sums exact; ties prefer the
            // lexicographically first membership vector
            Some((v, t)) => value > *v || (value == *v && take > *t),
        };
        if better {
            best = Some((value, take));
        }
    }
    let take = best.expect("the empty set is feasible").1;
    (0..n).filter(|&i| take[i]).collect()
}

fn criterion_metric_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut f1_mismatch = 0;
    for _ in 0..2000 {
        let n = rng.random_range(1..40);
        let durations: Vec<u32> = (0..n).map(|_| rng.random_range(1..6)).collect();
        let s: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.4)).collect();
        let g: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.4)).collect();
        let r = f1_against_reference(&s, &g, &durations).unwrap();
        let ss: BTreeSet<usize> = s.iter().copied().collect();
        let gs: BTreeSet<usize> = g.iter().copied().collect();
        let dur = |set: &BTreeSet<usize>| set.iter().map(|&i| durations[i] as u64).sum::<u64>();
        let inter: BTreeSet<usize> = ss.intersection(&gs).copied().collect();
        let (a, b, c) = (dur(&inter) as f64, dur(&ss) as f64, dur(&gs) as f64);
        let p = if b == 0.0 { 0.0 } else { a / b };
        let rc = if c == 0.0 { 0.0 } else { a / c };
        let f = if p + rc > 0.0 { 2.0 * p * rc / (p + rc) } else { 0.0 };
        if (r.precision, r.recall, r.f1) != (p, rc, f) {
            f1_mismatch += 1;
        }
    }
    let mut knap_mismatch = 0;
    let mut instances = 0;
    for n in 1..=15usize {
        let reps = if n <= 12 { 80 } else { 40 };
        for _ in 0..reps {
            instances += 1;
            let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..8) as f64).collect();
            let durations: Vec<u32> = (0..n).map(|_| rng.random_range(1..5)).collect();
            let budget = rng.random_range(0.05..1.0);
            let sel = select_summary(&scores, &durations, budget).unwrap();
            let total: u64 = durations.iter().map(|&d| d as u64).sum();
            let cap = kdexit::eval::budget_capacity(total, budget);
            let expect = brute_force_knapsack(&scores, &durations, cap);
            let value = |set: &[usize]| set.iter().map(|&i| scores[i]).sum::<f64>();
            if sel.selected != expect || (value(&sel.selected) - value(&expect)).abs() > VALUE_TOL {
                knap_mismatch += 1;
            }
        }
    }
    Outcome {
        pass: f1_mismatch == 0 && knap_mismatch == 0 && instances >= 1000,
        detail: format!(
            "F1 mismatches {f1_mismatch}/2000, knapsack mismatches {knap_mismatch}/{instances} (n = 1..15)"
        ),
    }
}

fn criterion_degenerate_weights() -> Outcome {
    let cfg = small_config();
    let [train, val, _] = generate_splits(&cfg).unwrap();
    let mut plan = cfg.plan().unwrap();
    let (teacher, _) = train_plain(&plan.teacher, Role::Teacher, &plan, &train, &val).unwrap();
    let (mentor, _) = train_plain(plan.mentor().unwrap(), Role::Mentor, &plan, &train, &val).unwrap();
    let (student, _) = train_plain(&plan.student, Role::Student, &plan, &train, &val).unwrap();

    plan.lambda = 0.0;
    let (kd, _) = train_kd_single(&plan, &teacher, Role::Teacher, &train, &val).unwrap();
    plan.phi = 0.0;
    plan.psi = 0.0;
    let joint = train_mskd(&plan, &train, &val).unwrap();
    let same = |a: &ExitableModel, b: &ExitableModel| a.parameter_checksum() == b.parameter_checksum() && a == b;
    let checks = [
        ("lambda=0 student", same(&kd, &student)),
        ("phi=psi=0 teacher", same(&joint.teacher, &teacher)),
        ("phi=psi=0 mentor", same(&joint.mentor, &mentor)),
        ("phi=psi=0 student", same(&joint.student, &student)),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    Outcome {
        pass: failed.is_empty(),
        detail: if failed.is_empty() {
            "all four runs bitwise equal to plain cross-entropy".into()
        } else {
            format!("differs: {}", failed.join(", "))
        },
    }
}

fn criterion_distill_ordering(cfg: &RunConfig, plan: &DistillPlan, splits: &[kdexit::data::Dataset; 3]) -> Outcome {
    let start = Instant::now();
    let seeds = cfg.seed_list(5);
    let m = run_distill_matrix(plan, &splits[0], &splits[2], &seeds, 1).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let mean = |v| 100.0 * m.mean(v);
    let (t, me, s) = (mean(Variant::Teacher), mean(Variant::Mentor), mean(Variant::StudentNoKd));
    let best_kd = 100.0 * m.best_single_kd().mean;
    let mskd = mean(Variant::StudentMskd);
    let gain: f64 = m
        .row(Variant::StudentMskd)
        .f1
        .iter()
        .zip(&m.row(Variant::StudentNoKd).f1)
        .map(|(a, b)| a - b)
        .sum::<f64>()
        / seeds.len() as f64;
    let checks = [t >= me, me >= s, mskd >= best_kd, best_kd >= s, gain > 0.0, secs < 600.0];
    Outcome {
        pass: checks.iter().all(|&c| c),
        detail: format!(
            "teacher {t:.2} mentor {me:.2} student {s:.2}; MSKD {mskd:.2} best single KD {best_kd:.2} ({}) no-KD {s:.2}; mean gain {:.2} pts",
            m.best_single_kd().variant,
            100.0 * gain
        ),
    }
}

fn criterion_tradeoff(cfg: &RunConfig, plan: &DistillPlan, splits: &[kdexit::data::Dataset; 3]) -> Outcome {
    let [train, val, test] = splits;
    let out = train_mskd(plan, train, val).unwrap();
    let mut student = out.student;
    let ex = train.examples().unwrap();
    student.calibrate_exit_heads(&ex, &cfg.head_calibration()).unwrap();
    student.finalize_prototype(&ex).unwrap();
    let taus = parse_tau_grid(&cfg.exit.tau_sweep).unwrap();
    let sweep = sweep_tau(&student, val, &taus, &cfg.eval).unwrap();
    let choice = select_tau(&sweep, 0.03).unwrap();
    let table = run_tradeoff_table(&student, test, choice, cfg.exit.repetitions, &cfg.eval).unwrap();
    let saving = table.ee.saving;
    let faster = table.ee.wall_nanos_per_sample <= table.no_ee.wall_nanos_per_sample;
    Outcome {
        pass: saving >= 0.15 && faster,
        detail: format!(
            "tau {:.2}{}; blocks {:.3} of {} (saving {:.1}%); F1 {:.2} -> {:.2}; wall {:.0} ns -> {:.0} ns per sample",
            choice.tau,
            if choice.fallback { " (fallback)" } else { "" },
            table.ee.mean_blocks,
            table.full_blocks,
            100.0 * saving,
            100.0 * table.no_ee.f1,
            100.0 * table.ee.f1,
            table.no_ee.wall_nanos_per_sample,
            table.ee.wall_nanos_per_sample
        ),
    }
}

fn criterion_ablation(cfg: &RunConfig, plan: &DistillPlan, splits: &[kdexit::data::Dataset; 3]) -> Outcome {
    let start = Instant::now();
    let seeds = cfg.seed_list(5);
    let table = run_ablation_table(plan, &splits[0], &splits[2], &default_keep_sets(), &seeds, 1).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let m: Vec<f64> = table.columns.iter().map(|c| 100.0 * c.mean).collect();
    let pass = m[1] > m[0] && m[2] > m[1] && m[3] <= m[2] && secs < 900.0;
    let names: Vec<String> = table.columns.iter().zip(&m).map(|(c, v)| format!("{} {v:.2}", c.name)).collect();
    Outcome {
        pass,
        detail: names.join(", "),
    }
}

fn criterion_routing() -> Outcome {
    let mut cfg = small_config();
    cfg.data.num_videos = 100;
    cfg.data.segments_per_video = 50;
    let [train, ..] = generate_splits(&small_config()).unwrap();
    let plan = cfg.plan().unwrap();
    let (mut m, _) = train_plain(&plan.student, Role::Student, &plan, &train, &train).unwrap();
    let ex = train.examples().unwrap();
    m.calibrate_exit_heads(&ex, &cfg.head_calibration()).unwrap();
    m.finalize_prototype(&ex).unwrap();

    // every split together: 5000 samples
    let all = {
        let [a, b, c] = generate_splits(&cfg).unwrap();
        let mut d = a;
        d.samples.extend(b.samples);
        d.samples.extend(c.samples);
        d
    };
    let n_exits = m.num_exits();
    let taus: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
    let per_tau: Vec<_> = taus
        .iter()
        .map(|&t| route_dataset(&m, &all, RoutingPolicy::new(t).unwrap()).unwrap())
        .collect();
    let full = per_tau.last().unwrap();
    let aex = all.examples().unwrap();
    let mut violations = [0usize; 5];
    for i in 0..all.len() {
        let conf = &full[i].confidences;
        for (ti, &tau) in taus.iter().enumerate() {
            let t = &per_tau[ti][i];
            // first hit, with confidences consistent with the full pass
            let expect = if tau < 1.0 {
                conf.iter().position(|&c| c >= tau).map_or(n_exits, |p| p + 1)
            } else {
                n_exits
            };
            if t.exit != expect || t.confidences[..] != conf[..t.exit] {
                violations[0] += 1;
            }
            if ti > 0 && t.exit < per_tau[ti - 1][i].exit {
                violations[1] += 1;
            }
        }
        if per_tau[0][i].exit != 1 {
            violations[2] += 1;
        }
        if full[i].exit != n_exits {
            violations[3] += 1;
        }
        if full[i].prediction.probs() != m.forward_full(aex.row(i)).unwrap().probs() {
            violations[4] += 1;
        }
    }
    Outcome {
        pass: all.len() >= 5000 && violations.iter().all(|&v| v == 0),
        detail: format!(
            "{} samples x {} taus; violations first-hit {}, monotone {}, tau=0 {}, tau=1 {}, exit-N {}",
            all.len(),
            taus.len(),
            violations[0],
            violations[1],
            violations[2],
            violations[3],
            violations[4]
        ),
    }
}

fn repro_once(config: &Path, out: &Path) -> std::path::PathBuf {
    let cli = Cli::try_parse_from([
        "kdexit",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "repro",
    ])
    .unwrap();
    run(cli).unwrap()
}

fn criterion_repro() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("small.ini");
    std::fs::write(&cfg_path, small_config().to_ini_string()).unwrap();
    let first = repro_once(&cfg_path, &tmp.path().join("a"));
    // second run starts from the first run's snapshot
    let second = repro_once(&first.join("config.ini"), &tmp.path().join("b"));
    let a = std::fs::read_to_string(first.join("checksums.txt")).unwrap();
    let b = std::fs::read_to_string(second.join("checksums.txt")).unwrap();
    let files = a.lines().count();
    Outcome {
        pass: a == b && files > 20,
        detail: format!("{files} checksummed files, identical: {}", a == b),
    }
}

#[test]
fn acceptance_criteria() {
    let mut all_pass = true;
    let mut step = |n: usize, title: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let out = f();
        report(n, title, start, &out);
        all_pass &= out.pass;
    };
    step(1, "gradient checks", &mut criterion_gradients);
    step(2, "metric and knapsack oracles", &mut criterion_metric_oracle);
    step(3, "degenerate loss weights", &mut criterion_degenerate_weights);

    let cfg = RunConfig::default();
    let plan = cfg.plan().unwrap();
    let splits = generate_splits(&cfg).unwrap();
    step(4, "distillation ordering", &mut || criterion_distill_ordering(&cfg, &plan, &splits));
    step(5, "early-exit trade-off", &mut || criterion_tradeoff(&cfg, &plan, &splits));
    step(6, "feature-group ablation", &mut || criterion_ablation(&cfg, &plan, &splits));
    step(7, "routing invariants", &mut criterion_routing);
    step(8, "repro checksums", &mut criterion_repro);
    assert!(all_pass, "at least one acceptance criterion failed; see the lines above");
}
