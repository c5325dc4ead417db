//! Experiment runners that emit table-shaped reports: the feature-group
//! ablation and the early-exit trade-off.

use std::collections::BTreeSet;
use std::io::Write;

use rayon::prelude::*;

use super::EvalOptions;
use crate::data::{keep_set_name, Dataset, Group};
use crate::distill::{train_plain, DistillPlan, Role};
use crate::earlyexit::{bench, ExitStats, RoutingPolicy, TauChoice};
use crate::error::{Error, Result};
use crate::model::ExitableModel;

/// Keep-sets in reporting order: T, T+Tr, T+Tr+Ge, T+Tr+Ge+Sd (V implied).
pub fn default_keep_sets() -> Vec<BTreeSet<Group>> {
    use Group::*;
    [vec![V, T], vec![V, T, Tr], vec![V, T, Tr, Ge], vec![V, T, Tr, Ge, Sd]]
        .into_iter()
        .map(|g| g.into_iter().collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationColumn {
    pub name: String,
    pub keep: BTreeSet<Group>,
    /// F1 per seed, in seed order.
    pub f1: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub seeds: Vec<u64>,
    pub columns: Vec<AblationColumn>,
}

impl AblationTable {
    pub fn column(&self, name: &str) -> Option<&AblationColumn> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// One column per keep-set; rows `mean`, `std`, then one per seed. F1
    /// in points.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e| Error::io("<ablation csv>", e);
        let names: Vec<&str> = self.columns.iter().map(|c| c.name.as_str()).collect();
        writeln!(w, "row,{}", names.join(",")).map_err(io)?;
        let line = |vals: Vec<f64>| {
            vals.iter()
                .map(|v| format!("{:.6}", 100.0 * v))
                .collect::<Vec<_>>()
                .join(",")
        };
        writeln!(w, "mean_f1,{}", line(self.columns.iter().map(|c| c.mean).collect())).map_err(io)?;
        writeln!(w, "std_f1,{}", line(self.columns.iter().map(|c| c.std).collect())).map_err(io)?;
        for (i, s) in self.seeds.iter().enumerate() {
            writeln!(w, "seed_{s},{}", line(self.columns.iter().map(|c| c.f1[i]).collect())).map_err(io)?;
        }
        Ok(())
    }
}

/// Trains one student per (keep-set, seed) with cross-entropy only and
/// scores it on the matching view of `eval_set`.
pub fn run_ablation_table(
    plan: &DistillPlan,
    train: &Dataset,
    eval_set: &Dataset,
    keep_sets: &[BTreeSet<Group>],
    seeds: &[u64],
    jobs: usize,
) -> Result<AblationTable> {
    if seeds.len() < 3 {
        return Err(Error::Parameter(format!(
            "the ablation table needs at least 3 seeds, got {}",
            seeds.len()
        )));
    }
    if keep_sets.is_empty() {
        return Err(Error::Parameter("no keep-sets given".into()));
    }
    plan.student.validate()?;
    let views = keep_sets
        .iter()
        .map(|k| Ok((train.ablate_groups(k)?, eval_set.ablate_groups(k)?)))
        .collect::<Result<Vec<_>>>()?;
    let cells: Vec<(usize, u64)> = (0..keep_sets.len())
        .flat_map(|k| seeds.iter().map(move |&s| (k, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let scores: Vec<f64> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(k, s)| {
                let p = plan.with_seed(s);
                let (tr, ev) = &views[k];
                let (_, report) = train_plain(&p.student, Role::Student, &p, tr, ev)?;
                Ok(report.f1_of(Role::Student).expect("student F1 is reported"))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let columns = keep_sets
        .iter()
        .enumerate()
        .map(|(k, keep)| {
            let f1 = scores[k * seeds.len()..(k + 1) * seeds.len()].to_vec();
            let (mean, std) = crate::distill::mean_std(&f1);
            AblationColumn {
                name: keep_set_name(keep),
                keep: keep.clone(),
                f1,
                mean,
                std,
            }
        })
        .collect();
    Ok(AblationTable {
        seeds: seeds.to_vec(),
        columns,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffColumn {
    pub f1: f64,
    pub mean_blocks: f64,
    pub wall_nanos_per_sample: f64,
    pub saving: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffTable {
    pub tau: TauChoice,
    pub full_blocks: usize,
    pub no_ee: TradeoffColumn,
    pub ee: TradeoffColumn,
    pub ee_stats: ExitStats,
}

impl TradeoffTable {
    /// Relative wall-clock reduction of the routed pass.
    pub fn time_reduction(&self) -> f64 {
        1.0 - self.ee.wall_nanos_per_sample / self.no_ee.wall_nanos_per_sample
    }

    /// Rows are measures, columns `no_ee,ee`. F1 in points.
    pub fn write_csv<W: Write>(&self, mut w: W, with_timing: bool) -> Result<()> {
        let io = |e| Error::io("<tradeoff csv>", e);
        writeln!(w, "measure,no_ee,ee").map_err(io)?;
        writeln!(w, "tau,1,{}", self.tau.tau).map_err(io)?;
        writeln!(w, "f1,{},{}", 100.0 * self.no_ee.f1, 100.0 * self.ee.f1).map_err(io)?;
        writeln!(w, "mean_blocks,{},{}", self.no_ee.mean_blocks, self.ee.mean_blocks).map_err(io)?;
        writeln!(w, "blocks_saving,{},{}", self.no_ee.saving, self.ee.saving).map_err(io)?;
        if with_timing {
            writeln!(
                w,
                "wall_nanos_per_sample,{},{}",
                self.no_ee.wall_nanos_per_sample, self.ee.wall_nanos_per_sample
            )
            .map_err(io)?;
            writeln!(w, "time_reduction,0,{}", self.time_reduction()).map_err(io)?;
        }
        writeln!(w, "tau_fallback,,{}", self.tau.fallback).map_err(io)?;
        Ok(())
    }
}

/// Full-depth inference against routing at the chosen τ on `data`.
pub fn run_tradeoff_table(
    model: &ExitableModel,
    data: &Dataset,
    tau: TauChoice,
    repetitions: usize,
    opts: &EvalOptions,
) -> Result<TradeoffTable> {
    let report = bench(model, data, RoutingPolicy::new(tau.tau)?, repetitions, opts)?;
    let full_blocks = model.full_blocks();
    Ok(TradeoffTable {
        tau,
        full_blocks,
        no_ee: TradeoffColumn {
            f1: report.stats.f1_full,
            mean_blocks: full_blocks as f64,
            wall_nanos_per_sample: report.full_nanos_per_sample,
            saving: 0.0,
        },
        ee: TradeoffColumn {
            f1: report.stats.f1_routed,
            mean_blocks: report.stats.mean_blocks,
            wall_nanos_per_sample: report.routed_nanos_per_sample,
            saving: report.stats.saving,
        },
        ee_stats: report.stats,
    })
}

/// Writes one two-column numeric series, preceded by a `# x y` comment.
pub fn write_series<W: Write>(mut w: W, x_name: &str, y_name: &str, points: &[(f64, f64)]) -> Result<()> {
    let io = |e| Error::io("<plot data>", e);
    writeln!(w, "# {x_name} {y_name}").map_err(io)?;
    for (x, y) in points {
        writeln!(w, "{x} {y}").map_err(io)?;
    }
    Ok(())
}

/// The τ → F1 (points) and τ → mean blocks curves of a sweep.
pub fn sweep_series(sweep: &[ExitStats]) -> (Vec<(f64, f64)>, Vec<(f64, f64)>) {
    (
        sweep.iter().map(|s| (s.tau, 100.0 * s.f1_routed)).collect(),
        sweep.iter().map(|s| (s.tau, s.mean_blocks)).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keep_sets_follow_table_order() {
        let names: Vec<String> = default_keep_sets().iter().map(keep_set_name).collect();
        assert_eq!(names, ["T", "T+Tr", "T+Tr+Ge", "T+Tr+Ge+Sd"]);
    }

    #[test]
    fn series_format() {
        let mut out = Vec::new();
        write_series(&mut out, "tau", "f1", &[(0.5, 60.0), (1.0, 61.5)]).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "# tau f1\n0.5 60\n1 61.5\n");
    }
}
