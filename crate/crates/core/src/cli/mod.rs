//! Command-line front end: one run directory per invocation, holding a
//! resolved `config.ini`, the command's CSV and plot-data outputs and a
//! `checksums.txt` over every non-timing file.

pub mod config;

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

pub use config::RunConfig;

use crate::data::{generate, ingest_annotations, load_dataset, save_annotations, save_dataset, AnnotationFormat, Dataset, DatasetHeader};
use crate::distill::{run_distill_matrix, train_kd_single, train_mskd, train_plain, DistillMode, Role, TrainReport};
use crate::earlyexit::{parse_tau_grid, route_dataset, select_tau, sweep_tau, write_stats_csv, write_traces_csv, RoutingPolicy};
use crate::error::{Error, Result};
use crate::eval::tables::{run_ablation_table, run_tradeoff_table, sweep_series, write_series};
use crate::eval::{model_f1, score_video, EvalResult};
use crate::model::{load_model, save_model, ExitableModel};

/// Dataset file names inside a data directory.
pub const SPLIT_FILES: [&str; 3] = ["train.jsonl", "val.jsonl", "test.jsonl"];
pub const CHECKSUM_FILE: &str = "checksums.txt";
pub const SNAPSHOT_FILE: &str = "config.ini";

#[derive(Debug, Parser)]
#[command(name = "kdexit", version, about = "Distillation and early-exit experiments on synthetic segment-importance data")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct GlobalArgs {
    /// Run configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Parent directory for run directories.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for multi-seed runners and sweeps.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Dataset directory written by `generate`.
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Subcommand, Clone)]
pub enum Command {
    /// Generate a planted dataset and split it into train/val/test.
    Generate,
    /// Train models under a distillation mode.
    Train {
        /// teacher, kd or mskd.
        #[arg(long)]
        mode: Option<String>,
        /// Also run the multi-seed distillation matrix on the test split.
        #[arg(long)]
        matrix: bool,
        /// Seeds for the matrix.
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Sweep τ on validation, pick it, and benchmark on test.
    ExitBench {
        /// Student artifact (`student.kdx` from `train`).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Grid `start:stop:step`.
        #[arg(long)]
        tau_sweep: Option<String>,
        /// Largest tolerated F1 drop, in F1 points.
        #[arg(long)]
        max_f1_drop: Option<f64>,
    },
    /// Feature-group ablation over several seeds.
    Ablate {
        /// Keep-sets separated by `;`, groups by `+`, e.g. `T;T+Tr`.
        #[arg(long)]
        groups: Option<String>,
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Score an external prediction file against an annotation table.
    Eval {
        /// TSV `video_id<TAB>segment_index<TAB>score`.
        #[arg(long)]
        pred: PathBuf,
        /// Annotation table `video_id<TAB>segment_index<TAB>duration<TAB>scores`.
        #[arg(long)]
        refs: PathBuf,
        /// Summary budget as a fraction of video duration.
        #[arg(long)]
        budget: Option<f64>,
        /// mean or max over references.
        #[arg(long)]
        agg: Option<String>,
    },
    /// generate, train --mode mskd --matrix, exit-bench and ablate in one run.
    Repro,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Generate => "generate",
            Command::Train { .. } => "train",
            Command::ExitBench { .. } => "exit-bench",
            Command::Ablate { .. } => "ablate",
            Command::Eval { .. } => "eval",
            Command::Repro => "repro",
        }
    }
}

/// Loads the config file (or defaults) and applies every flag on top.
pub fn resolve_config(global: &GlobalArgs, command: &Command) -> Result<RunConfig> {
    let mut cfg = match &global.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut set = |sec: &str, key: &str, val: String| cfg.set(sec, key, &val);
    if let Some(s) = global.seed {
        set("run", "seed", s.to_string())?;
    }
    if let Some(j) = global.jobs {
        set("run", "jobs", j.to_string())?;
    }
    if let Some(o) = &global.out {
        set("run", "out", o.display().to_string())?;
    }
    if let Some(d) = &global.data {
        set("data", "dir", d.display().to_string())?;
    }
    match command {
        Command::Train { mode, seeds, .. } => {
            if let Some(m) = mode {
                set("distill", "mode", m.clone())?;
            }
            if let Some(n) = seeds {
                set("distill", "matrix_seeds", n.to_string())?;
            }
        }
        Command::ExitBench {
            model,
            tau_sweep,
            max_f1_drop,
        } => {
            if let Some(m) = model {
                set("exit", "model", m.display().to_string())?;
            }
            if let Some(t) = tau_sweep {
                set("exit", "tau_sweep", t.clone())?;
            }
            if let Some(d) = max_f1_drop {
                set("exit", "max_f1_drop", d.to_string())?;
            }
        }
        Command::Ablate { groups, seeds } => {
            if let Some(g) = groups {
                set("ablate", "groups", g.clone())?;
            }
            if let Some(n) = seeds {
                set("ablate", "seeds", n.to_string())?;
            }
        }
        Command::Eval { budget, agg, .. } => {
            if let Some(b) = budget {
                set("eval", "budget", b.to_string())?;
            }
            if let Some(a) = agg {
                set("eval", "aggregation", a.clone())?;
            }
        }
        Command::Generate | Command::Repro => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Parses arguments, runs the command and returns the run directory.
pub fn run(cli: Cli) -> Result<PathBuf> {
    let cfg = resolve_config(&cli.global, &cli.command)?;
    let dir = create_run_dir(&cfg.out, cli.command.name(), cfg.seed)?;
    log::info!("run directory {}", dir.display());
    execute(&cli.command, &cfg, &dir)?;
    Ok(dir)
}

/// Runs `command` inside an existing directory and seals it with checksums.
pub fn execute(command: &Command, cfg: &RunConfig, dir: &Path) -> Result<()> {
    cfg.write_snapshot(&dir.join(SNAPSHOT_FILE))?;
    match command {
        Command::Generate => cmd_generate(cfg, dir)?,
        Command::Train { matrix, .. } => cmd_train(cfg, dir, *matrix)?,
        Command::ExitBench { .. } => cmd_exit_bench(cfg, dir)?,
        Command::Ablate { .. } => cmd_ablate(cfg, dir)?,
        Command::Eval { pred, refs, .. } => cmd_eval(cfg, dir, pred, refs)?,
        Command::Repro => cmd_repro(cfg, dir)?,
    }
    write_checksums(dir)
}

/// `<out>/<command>-<UTC timestamp>-s<seed>`, suffixed when taken.
pub fn create_run_dir(out: &Path, command: &str, seed: u64) -> Result<PathBuf> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    let base = format!("{command}-{stamp}-s{seed}");
    for n in 0.. {
        let name = if n == 0 { base.clone() } else { format!("{base}-{n}") };
        let p = out.join(name);
        match fs::create_dir(&p) {
            Ok(()) => return Ok(p),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(Error::io(&p, e)),
        }
    }
    unreachable!("unbounded suffix search")
}

/// Files excluded from checksums: wall-clock measurements and the config
/// snapshots, which record machine-specific paths.
pub fn is_checksummed(rel: &Path) -> bool {
    let name = rel.file_name().and_then(|n| n.to_str()).unwrap_or("");
    !(name.contains("_timing") || name == SNAPSHOT_FILE || (name == CHECKSUM_FILE && rel.parent() == Some(Path::new(""))))
}

/// sha256 of every checksummed file under `dir`, sorted by relative path.
pub fn compute_checksums(dir: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::Data(format!("walking {}: {e}", dir.display())))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry.path().strip_prefix(dir).expect("walk stays under root");
        if !is_checksummed(rel) {
            continue;
        }
        let bytes = fs::read(entry.path()).map_err(|e| Error::io(entry.path(), e))?;
        let rel = rel.to_string_lossy().replace('\\', "/");
        out.push((rel, format!("{:x}", Sha256::digest(&bytes))));
    }
    out.sort();
    Ok(out)
}

fn write_checksums(dir: &Path) -> Result<()> {
    let sums = compute_checksums(dir)?;
    let mut w = create(&dir.join(CHECKSUM_FILE))?;
    for (rel, hash) in sums {
        writeln!(w, "{hash}  {rel}").map_err(|e| Error::io(dir.join(CHECKSUM_FILE), e))?;
    }
    w.flush().map_err(|e| Error::io(dir.join(CHECKSUM_FILE), e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

/// Creates `path` and hands a buffered writer to `f`.
fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn data_dir(cfg: &RunConfig) -> Result<&Path> {
    cfg.data.dir.as_deref().ok_or_else(|| {
        Error::Config("no dataset directory: pass --data DIR or set [data] dir (see `kdexit generate`)".into())
    })
}

/// Reads the three splits of the configured dataset directory.
pub fn load_splits(cfg: &RunConfig) -> Result<[Dataset; 3]> {
    let dir = data_dir(cfg)?;
    let [a, b, c] = SPLIT_FILES.map(|f| load_dataset(dir.join(f)));
    let splits = [a?, b?, c?];
    if splits[0].input_dim() != cfg.input_dim() || splits[0].header.num_classes != cfg.data.num_classes {
        return Err(Error::Config(format!(
            "dataset in {} has input_dim {} and K={}, config expects {} and {}",
            dir.display(),
            splits[0].input_dim(),
            splits[0].header.num_classes,
            cfg.input_dim(),
            cfg.data.num_classes
        )));
    }
    Ok(splits)
}

/// Generates the configured planted dataset and splits it by video.
pub fn generate_splits(cfg: &RunConfig) -> Result<[Dataset; 3]> {
    let header = DatasetHeader::new(cfg.data.dims, cfg.data.num_classes, cfg.data.annotators);
    let all = generate(
        &cfg.planted,
        &header,
        cfg.data.num_videos,
        cfg.data.segments_per_video,
        cfg.seed,
    )?;
    all.split(cfg.data.split, cfg.seed)
}

fn cmd_generate(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let splits = generate_splits(cfg)?;
    for (d, f) in splits.iter().zip(SPLIT_FILES) {
        save_dataset(dir.join(f), d)?;
    }
    save_annotations(dir.join("test_annotations.tsv"), &splits[2])?;
    write_file(&dir.join("splits.csv"), |w| {
        writeln!(w, "split,videos,segments").map_err(|e| Error::io("splits.csv", e))?;
        for (d, name) in splits.iter().zip(["train", "val", "test"]) {
            writeln!(w, "{name},{},{}", d.video_ids().len(), d.len()).map_err(|e| Error::io("splits.csv", e))?;
        }
        Ok(())
    })
}

fn finalize_and_save(model: &mut ExitableModel, train: &Dataset, path: &Path) -> Result<()> {
    model.finalize_prototype(&train.examples()?)?;
    save_model(path, model)
}

fn cmd_train(cfg: &RunConfig, dir: &Path, matrix: bool) -> Result<()> {
    let mode = cfg.distill.mode;
    let needs_mentor = mode == DistillMode::MskdJoint
        || matrix
        || (mode == DistillMode::KdSingle && cfg.distill.kd_source == Role::Mentor);
    if needs_mentor && cfg.mentor.is_none() {
        return Err(Error::Config(
            "this run needs a mentor: add a [mentor] section (hidden_dim, depth, exit_depths)".into(),
        ));
    }
    let plan = cfg.plan()?;
    let [train, val, test] = load_splits(cfg)?;

    let mut reports: Vec<TrainReport> = Vec::new();
    let mut summary: Vec<(Role, f64)> = Vec::new();
    let mut save = |role: Role, mut m: ExitableModel| -> Result<()> {
        finalize_and_save(&mut m, &train, &dir.join(format!("{role}.kdx")))?;
        summary.push((role, model_f1(&m, &val, &plan.eval)?));
        Ok(())
    };
    match mode {
        DistillMode::TeacherOnly => {
            let (t, r) = train_plain(&plan.teacher, Role::Teacher, &plan, &train, &val)?;
            reports.push(r);
            save(Role::Teacher, t)?;
        }
        DistillMode::KdSingle => {
            let source = cfg.distill.kd_source;
            let source_cfg = match source {
                Role::Mentor => plan.mentor()?.clone(),
                _ => plan.teacher.clone(),
            };
            let (src, r) = train_plain(&source_cfg, source, &plan, &train, &val)?;
            reports.push(r);
            let (s, r) = train_kd_single(&plan, &src, source, &train, &val)?;
            reports.push(r);
            save(source, src)?;
            save(Role::Student, s)?;
        }
        DistillMode::MskdJoint => {
            let out = train_mskd(&plan, &train, &val)?;
            reports.push(out.report);
            save(Role::Teacher, out.teacher)?;
            save(Role::Mentor, out.mentor)?;
            save(Role::Student, out.student)?;
        }
    }

    write_file(&dir.join("losses.csv"), |w| {
        let mut first = true;
        for r in &reports {
            let mut buf = Vec::new();
            r.write_loss_csv(&mut buf)?;
            let text = String::from_utf8(buf).expect("csv is utf-8");
            let body = if first { text.as_str() } else { text.split_once('\n').map_or("", |(_, b)| b) };
            w.write_all(body.as_bytes()).map_err(|e| Error::io("losses.csv", e))?;
            first = false;
        }
        Ok(())
    })?;
    write_file(&dir.join("summary.csv"), |w| {
        let io = |e| Error::io("summary.csv", e);
        writeln!(w, "role,val_f1").map_err(io)?;
        for (role, f1) in &summary {
            writeln!(w, "{role},{:.6}", 100.0 * f1).map_err(io)?;
        }
        Ok(())
    })?;
    write_file(&dir.join("train_timing.csv"), |w| {
        let io = |e| Error::io("train_timing.csv", e);
        writeln!(w, "run,wall_seconds").map_err(io)?;
        for (i, r) in reports.iter().enumerate() {
            writeln!(w, "{i},{}", r.wall_seconds).map_err(io)?;
        }
        Ok(())
    })?;

    if matrix {
        let seeds = cfg.seed_list(cfg.distill.matrix_seeds);
        let m = run_distill_matrix(&plan, &train, &test, &seeds, cfg.jobs)?;
        write_file(&dir.join("distill_matrix.csv"), |w| m.write_csv(w))?;
        write_file(&dir.join("distill_matrix_seeds.csv"), |w| m.write_seeds_csv(w))?;
    }
    Ok(())
}

fn cmd_exit_bench(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let path = cfg.exit.model.as_deref().ok_or_else(|| {
        Error::Config("no model: pass --model PATH or set [exit] model to a student.kdx from `kdexit train`".into())
    })?;
    let mut model = load_model(path)?;
    if !model.is_trained() {
        return Err(Error::Lifecycle(format!(
            "{} is untrained; produce a trained student with `kdexit train` first",
            path.display()
        )));
    }
    let [train, val, test] = load_splits(cfg)?;
    if !model.prototype_finalized() {
        return Err(Error::Lifecycle(format!(
            "{} has no finalized prototype; retrain it with `kdexit train`, which finalizes the prototype on the train split",
            path.display()
        )));
    }
    if model.num_exits() > 1 && !model.heads_calibrated() {
        log::info!("calibrating {} intermediate exit heads", model.num_exits() - 1);
        model.calibrate_exit_heads(&train.examples()?, &cfg.head_calibration())?;
    }
    model.ensure_finalized()?;
    save_model(dir.join("student_calibrated.kdx"), &model)?;

    let taus = parse_tau_grid(&cfg.exit.tau_sweep)?;
    let sweep_val = sweep_tau(&model, &val, &taus, &cfg.eval)?;
    let choice = select_tau(&sweep_val, cfg.exit.max_f1_drop / 100.0)?;
    let sweep_test = sweep_tau(&model, &test, &taus, &cfg.eval)?;
    let table = run_tradeoff_table(&model, &test, choice, cfg.exit.repetitions, &cfg.eval)?;

    write_file(&dir.join("sweep_val.csv"), |w| write_stats_csv(w, &sweep_val, false))?;
    write_file(&dir.join("sweep_test.csv"), |w| write_stats_csv(w, &sweep_test, false))?;
    write_file(&dir.join("sweep_val_timing.csv"), |w| write_stats_csv(w, &sweep_val, true))?;
    write_file(&dir.join("selected_tau.csv"), |w| {
        let io = |e| Error::io("selected_tau.csv", e);
        writeln!(w, "tau,fallback,max_f1_drop_points").map_err(io)?;
        writeln!(w, "{},{},{}", choice.tau, choice.fallback, cfg.exit.max_f1_drop).map_err(io)
    })?;
    write_file(&dir.join("tradeoff.csv"), |w| table.write_csv(w, false))?;
    write_file(&dir.join("tradeoff_timing.csv"), |w| table.write_csv(w, true))?;

    let traces = route_dataset(&model, &test, RoutingPolicy::new(choice.tau)?)?;
    write_file(&dir.join("exit_traces_timing.csv"), |w| write_traces_csv(w, &traces))?;

    let (f1_val, blocks_val) = sweep_series(&sweep_val);
    let (f1_test, blocks_test) = sweep_series(&sweep_test);
    write_file(&dir.join("val_f1_vs_tau.dat"), |w| write_series(w, "tau", "f1", &f1_val))?;
    write_file(&dir.join("val_blocks_vs_tau.dat"), |w| write_series(w, "tau", "mean_blocks", &blocks_val))?;
    write_file(&dir.join("test_f1_vs_tau.dat"), |w| write_series(w, "tau", "f1", &f1_test))?;
    write_file(&dir.join("test_blocks_vs_tau.dat"), |w| write_series(w, "tau", "mean_blocks", &blocks_test))?;
    let frontier: Vec<(f64, f64)> = sweep_test.iter().map(|s| (s.mean_blocks, 100.0 * s.f1_routed)).collect();
    write_file(&dir.join("test_f1_vs_blocks.dat"), |w| write_series(w, "mean_blocks", "f1", &frontier))?;
    Ok(())
}

fn cmd_ablate(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let plan = cfg.plan()?;
    let [train, _, test] = load_splits(cfg)?;
    let seeds = cfg.seed_list(cfg.ablate.seeds);
    let table = run_ablation_table(&plan, &train, &test, &cfg.ablate.groups, &seeds, cfg.jobs)?;
    write_file(&dir.join("ablation.csv"), |w| table.write_csv(w))?;
    let points: Vec<(f64, f64)> = table
        .columns
        .iter()
        .enumerate()
        .map(|(i, c)| (i as f64, 100.0 * c.mean))
        .collect();
    write_file(&dir.join("ablation_f1.dat"), |w| write_series(w, "keep_set_index", "f1", &points))
}

/// Reads `video_id<TAB>segment_index<TAB>score` lines.
pub fn read_predictions(path: &Path) -> Result<HashMap<(String, usize), f64>> {
    let source = path.display().to_string();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = HashMap::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let perr = |msg: String| Error::Parse {
            path: source.clone(),
            line: i + 1,
            msg,
        };
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(perr(format!("expected 3 tab-separated columns, found {}", cols.len())));
        }
        let seg: usize = cols[1]
            .trim()
            .parse()
            .map_err(|_| perr(format!("bad segment_index {:?}", cols[1])))?;
        let score: f64 = cols[2]
            .trim()
            .parse()
            .map_err(|_| perr(format!("bad score {:?}", cols[2])))?;
        if !score.is_finite() {
            return Err(perr("score is not finite".into()));
        }
        if out.insert((cols[0].trim().to_string(), seg), score).is_some() {
            return Err(perr(format!("duplicate entry for {}#{seg}", cols[0].trim())));
        }
    }
    Ok(out)
}

/// Scores predictions against every video of an annotation table.
pub fn evaluate_files(
    pred: &Path,
    refs: &Path,
    opts: &crate::eval::EvalOptions,
) -> Result<Vec<(String, EvalResult)>> {
    let table = ingest_annotations(refs, &AnnotationFormat::default())?;
    let mut preds = read_predictions(pred)?;
    let mut scores = Vec::with_capacity(table.len());
    for s in &table.samples {
        let key = (s.video_id.clone(), s.segment_index);
        scores.push(preds.remove(&key).ok_or_else(|| {
            Error::Data(format!("{}: no prediction for {}#{}", pred.display(), key.0, key.1))
        })?);
    }
    if let Some(((v, i), _)) = preds.into_iter().min_by(|a, b| a.0.cmp(&b.0)) {
        return Err(Error::Data(format!(
            "{}: prediction for {v}#{i} has no reference segment",
            pred.display()
        )));
    }
    table
        .videos()
        .iter()
        .map(|v| Ok((v.video_id.clone(), score_video(&table, v, &scores, opts)?)))
        .collect()
}

fn cmd_eval(cfg: &RunConfig, dir: &Path, pred: &Path, refs: &Path) -> Result<()> {
    let per_video = evaluate_files(pred, refs, &cfg.eval)?;
    let n = per_video.len() as f64;
    let mean = |f: fn(&EvalResult) -> f64| per_video.iter().map(|(_, r)| f(r)).sum::<f64>() / n;
    let (p, r, f1) = (mean(|e| e.precision), mean(|e| e.recall), mean(|e| e.f1));
    write_file(&dir.join("eval.csv"), |w| {
        let io = |e| Error::io("eval.csv", e);
        writeln!(w, "video_id,precision,recall,f1,aggregation").map_err(io)?;
        for (v, e) in &per_video {
            writeln!(w, "{v},{},{},{},{}", e.precision, e.recall, e.f1, e.aggregation).map_err(io)?;
        }
        writeln!(w, "ALL,{p},{r},{f1},{}", cfg.eval.aggregation).map_err(io)
    })?;
    println!(
        "videos={} precision={p:.6} recall={r:.6} f1={f1:.6} aggregation={} budget={}",
        per_video.len(),
        cfg.eval.aggregation,
        cfg.eval.budget_fraction
    );
    Ok(())
}

fn cmd_repro(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let step = |name: &str| -> Result<PathBuf> {
        let p = dir.join(name);
        fs::create_dir(&p).map_err(|e| Error::io(&p, e))?;
        Ok(p)
    };
    let mut cfg = cfg.clone();

    let gen = step("generate")?;
    execute(&Command::Generate, &cfg, &gen)?;
    cfg.data.dir = Some(gen);

    let mut train_cfg = cfg.clone();
    train_cfg.distill.mode = DistillMode::MskdJoint;
    let train = step("train")?;
    execute(
        &Command::Train {
            mode: None,
            matrix: true,
            seeds: None,
        },
        &train_cfg,
        &train,
    )?;

    let mut exit_cfg = cfg.clone();
    exit_cfg.exit.model = Some(train.join("student.kdx"));
    let bench = step("exit-bench")?;
    execute(
        &Command::ExitBench {
            model: None,
            tau_sweep: None,
            max_f1_drop: None,
        },
        &exit_cfg,
        &bench,
    )?;

    let ablate = step("ablate")?;
    execute(&Command::Ablate { groups: None, seeds: None }, &cfg, &ablate)
}

/// Entry point for the binary: returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(dir) => {
            println!("{}", dir.display());
            0
        }
        Err(e) => {
            eprintln!("error[{}]: {}", e.code(), single_line(&e.to_string()));
            1
        }
    }
}

fn single_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
