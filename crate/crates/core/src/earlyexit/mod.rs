//! Inference-only early exit: evaluate heads in depth order over a shared
//! backbone prefix and stop at the first head whose cosine confidence
//! against the stored prototype reaches τ.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::eval::{dataset_f1, importance_score, predict_importance, EvalOptions};
use crate::model::ExitableModel;
use crate::numerics::Distribution;

/// Repetitions used when a caller does not choose.
pub const DEFAULT_REPETITIONS: usize = 5;

/// Confidence threshold for leaving early. `tau = 1` is a sentinel that
/// disables early exit; any other value is a plain `γ ≥ τ` test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoutingPolicy {
    pub tau: f64,
}

impl RoutingPolicy {
    pub fn new(tau: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::Parameter(format!("tau must lie in [0, 1], got {tau}")));
        }
        Ok(Self { tau })
    }

    pub fn no_early_exit() -> Self {
        Self { tau: 1.0 }
    }

    /// Whether an exit with confidence `γ` is taken. τ = 1 never accepts.
    pub fn accepts(&self, confidence: f64) -> bool {
        self.tau < 1.0 && confidence >= self.tau
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExitTrace {
    pub sample_id: usize,
    /// 1-based exit taken.
    pub exit: usize,
    /// γ of every head evaluated, in order; its length equals `exit`.
    pub confidences: Vec<f64>,
    pub blocks_traversed: usize,
    pub prediction: Distribution,
    pub wall_nanos: u64,
}

impl ExitTrace {
    pub fn predicted_class(&self) -> usize {
        self.prediction.argmax()
    }

    pub fn confidence_at_exit(&self) -> f64 {
        *self.confidences.last().expect("at least one head is evaluated")
    }
}

fn route_unchecked(model: &ExitableModel, x: &[f64], policy: RoutingPolicy, sample_id: usize) -> Result<ExitTrace> {
    let start = Instant::now();
    let n_exits = model.num_exits();
    let mut h = model.embed_rows(x);
    let mut depth = 0;
    let mut confidences = Vec::with_capacity(n_exits);
    for exit in 1..=n_exits {
        let target = model.exit_depth(exit)?;
        h = model.advance_rows(h, depth, target);
        depth = target;
        let pred = model.prediction_from_hidden(exit, &h)?;
        confidences.push(pred.confidence);
        if exit == n_exits || policy.accepts(pred.confidence) {
            return Ok(ExitTrace {
                sample_id,
                exit,
                confidences,
                blocks_traversed: pred.blocks_traversed,
                prediction: pred.probs,
                wall_nanos: start.elapsed().as_nanos() as u64,
            });
        }
    }
    unreachable!("the final exit always returns")
}

/// Routes one input. The model must be trained, calibrated and carry a
/// finalized prototype.
pub fn route(model: &ExitableModel, x: &[f64], policy: RoutingPolicy) -> Result<ExitTrace> {
    model.ensure_finalized()?;
    if x.len() != model.config().input_dim {
        return Err(Error::Dimension(format!(
            "input of length {} for input_dim {}",
            x.len(),
            model.config().input_dim
        )));
    }
    route_unchecked(model, x, policy, 0)
}

/// Routes every sample of `data` in order.
pub fn route_dataset(model: &ExitableModel, data: &Dataset, policy: RoutingPolicy) -> Result<Vec<ExitTrace>> {
    model.ensure_finalized()?;
    let ex = data.examples()?;
    if ex.dim() != model.config().input_dim {
        return Err(Error::Dimension(format!(
            "dataset width {} for input_dim {}",
            ex.dim(),
            model.config().input_dim
        )));
    }
    (0..ex.len())
        .map(|i| route_unchecked(model, ex.row(i), policy, i))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitStats {
    pub tau: f64,
    pub mean_blocks: f64,
    pub median_blocks: f64,
    /// Sample count per exit; index 0 is exit 1.
    pub exit_histogram: Vec<usize>,
    pub mean_wall_nanos: f64,
    pub f1_routed: f64,
    pub f1_full: f64,
    /// `D + 1`, the proxy cost of a full-depth pass.
    pub full_blocks: usize,
    /// `1 − mean_blocks / (D + 1)`.
    pub saving: f64,
}

impl ExitStats {
    pub fn f1_drop(&self) -> f64 {
        self.f1_full - self.f1_routed
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Folds traces (in sample order) into summary statistics.
pub fn stats_from_traces(
    model: &ExitableModel,
    data: &Dataset,
    traces: &[ExitTrace],
    tau: f64,
    f1_full: f64,
    opts: &EvalOptions,
) -> Result<ExitStats> {
    if traces.is_empty() || traces.len() != data.len() {
        return Err(Error::Dimension(format!(
            "{} traces for {} samples",
            traces.len(),
            data.len()
        )));
    }
    let n = traces.len() as f64;
    let mut hist = vec![0; model.num_exits()];
    for t in traces {
        hist[t.exit - 1] += 1;
    }
    let mean_blocks = traces.iter().map(|t| t.blocks_traversed as f64).sum::<f64>() / n;
    let routed: Vec<f64> = traces.iter().map(|t| importance_score(t.prediction.probs())).collect();
    let full_blocks = model.full_blocks();
    Ok(ExitStats {
        tau,
        mean_blocks,
        median_blocks: median(traces.iter().map(|t| t.blocks_traversed as f64).collect()),
        exit_histogram: hist,
        mean_wall_nanos: traces.iter().map(|t| t.wall_nanos as f64).sum::<f64>() / n,
        f1_routed: dataset_f1(data, &routed, opts)?,
        f1_full,
        full_blocks,
        saving: 1.0 - mean_blocks / full_blocks as f64,
    })
}

/// One `ExitStats` per τ, all over the same sample order.
pub fn sweep_tau(model: &ExitableModel, data: &Dataset, taus: &[f64], opts: &EvalOptions) -> Result<Vec<ExitStats>> {
    if taus.is_empty() {
        return Err(Error::Parameter("tau sweep is empty".into()));
    }
    if taus.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Parameter("tau sweep must be sorted ascending".into()));
    }
    let policies = taus.iter().map(|&t| RoutingPolicy::new(t)).collect::<Result<Vec<_>>>()?;
    model.ensure_finalized()?;
    let f1_full = dataset_f1(data, &predict_importance(model, data)?, opts)?;
    policies
        .into_iter()
        .map(|p| {
            let traces = route_dataset(model, data, p)?;
            stats_from_traces(model, data, &traces, p.tau, f1_full, opts)
        })
        .collect()
}

/// Parses `a:b:step` into an ascending grid that includes `b` when the
/// step lands on it.
pub fn parse_tau_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Error::Parameter(format!("tau sweep must look like a:b:step, got {spec:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let nums = parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<Vec<_>>>()?;
    let (a, b, step) = (nums[0], nums[1], nums[2]);
    if !(step > 0.0) || !(a <= b) || !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) {
        return Err(bad());
    }
    let count = ((b - a) / step + 1e-9).floor() as usize;
    // round to the step's decimal grid so 0.1 + 0.2 style drift cannot leak
    Ok((0..=count)
        .map(|i| ((a + i as f64 * step) * 1e9).round() / 1e9)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauChoice {
    pub tau: f64,
    /// Set when no swept τ met the constraint and early exit was disabled.
    pub fallback: bool,
}

/// Picks the τ with the lowest mean blocks among those whose F1 drop (a
/// fraction, like the F1 values) is at most `max_f1_drop`. Ties go to the
/// smaller τ. With no admissible τ, returns the no-early-exit sentinel
/// with `fallback` set.
pub fn select_tau(sweep: &[ExitStats], max_f1_drop: f64) -> Result<TauChoice> {
    if sweep.is_empty() {
        return Err(Error::Parameter("tau sweep is empty".into()));
    }
    if !(max_f1_drop >= 0.0) {
        return Err(Error::Parameter(format!(
            "max_f1_drop must be >= 0, got {max_f1_drop}"
        )));
    }
    let mut best: Option<&ExitStats> = None;
    for s in sweep.iter().filter(|s| s.f1_drop() <= max_f1_drop) {
        best = match best {
            None => Some(s),
            Some(b) if s.mean_blocks < b.mean_blocks || (s.mean_blocks == b.mean_blocks && s.tau < b.tau) => Some(s),
            keep => keep,
        };
    }
    Ok(match best {
        Some(s) => TauChoice {
            tau: s.tau,
            fallback: false,
        },
        None => {
            log::warn!("no swept tau keeps the F1 drop within {max_f1_drop}; early exit disabled");
            TauChoice {
                tau: 1.0,
                fallback: true,
            }
        }
    })
}

/// Median-of-repetitions timing of a routed pass and of a plain full-depth
/// pass over the same samples.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub stats: ExitStats,
    pub repetitions: usize,
    /// Median over repetitions of the per-sample routed wall time.
    pub routed_nanos_per_sample: f64,
    /// Same for `forward_full`, the no-early-exit baseline.
    pub full_nanos_per_sample: f64,
}

fn time_pass<F: FnMut() -> Result<()>>(reps: usize, n: usize, mut f: F) -> Result<f64> {
    let mut runs = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        f()?;
        runs.push(start.elapsed().as_nanos() as f64 / n as f64);
    }
    Ok(median(runs))
}

pub fn bench(
    model: &ExitableModel,
    data: &Dataset,
    policy: RoutingPolicy,
    repetitions: usize,
    opts: &EvalOptions,
) -> Result<BenchReport> {
    if repetitions < 3 {
        return Err(Error::Parameter(format!(
            "bench needs at least 3 repetitions, got {repetitions}"
        )));
    }
    model.ensure_finalized()?;
    let ex = data.examples()?;
    let n = ex.len();
    let f1_full = dataset_f1(data, &predict_importance(model, data)?, opts)?;

    // warm both paths once so neither pays first-touch costs
    route_dataset(model, data, policy)?;
    for i in 0..n {
        std::hint::black_box(model.forward_full(ex.row(i))?);
    }

    let mut traces = Vec::new();
    let routed = time_pass(repetitions, n, || {
        traces = (0..n)
            .map(|i| route_unchecked(model, ex.row(i), policy, i))
            .collect::<Result<Vec<_>>>()?;
        Ok(())
    })?;
    let full = time_pass(repetitions, n, || {
        for i in 0..n {
            std::hint::black_box(model.forward_full(ex.row(i))?);
        }
        Ok(())
    })?;
    Ok(BenchReport {
        stats: stats_from_traces(model, data, &traces, policy.tau, f1_full, opts)?,
        repetitions,
        routed_nanos_per_sample: routed,
        full_nanos_per_sample: full,
    })
}

/// `sample_id,exit_index,blocks,confidence_at_exit,predicted_class,wall_nanos`
pub fn write_traces_csv<W: Write>(mut w: W, traces: &[ExitTrace]) -> Result<()> {
    let io = |e| Error::io("<trace csv>", e);
    writeln!(w, "sample_id,exit_index,blocks,confidence_at_exit,predicted_class,wall_nanos").map_err(io)?;
    for t in traces {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            t.sample_id,
            t.exit,
            t.blocks_traversed,
            t.confidence_at_exit(),
            t.predicted_class(),
            t.wall_nanos
        )
        .map_err(io)?;
    }
    Ok(())
}

/// One row per τ. With `with_timing = false` the wall-clock column is
/// omitted so the file is reproducible byte for byte.
pub fn write_stats_csv<W: Write>(mut w: W, stats: &[ExitStats], with_timing: bool) -> Result<()> {
    let io = |e| Error::io("<stats csv>", e);
    write!(w, "tau,mean_blocks,median_blocks,saving,f1_routed,f1_full,exit_histogram").map_err(io)?;
    writeln!(w, "{}", if with_timing { ",mean_wall_nanos" } else { "" }).map_err(io)?;
    for s in stats {
        let hist: Vec<String> = s.exit_histogram.iter().map(|c| c.to_string()).collect();
        write!(
            w,
            "{},{},{},{},{},{},{}",
            s.tau,
            s.mean_blocks,
            s.median_blocks,
            s.saving,
            100.0 * s.f1_routed,
            100.0 * s.f1_full,
            hist.join(";")
        )
        .map_err(io)?;
        if with_timing {
            write!(w, ",{}", s.mean_wall_nanos).map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    Ok(())
}
