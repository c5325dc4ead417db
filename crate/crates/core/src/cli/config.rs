//! Flat `key = value` run configuration with `[section]` headers.
//!
//! Sections absent from a file take built-in defaults, with one exception:
//! a file without a `[mentor]` section configures no mentor. Unknown
//! sections and keys are rejected so typos cannot silently fall back to a
//! default.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::Ini;

use crate::data::{parse_keep_set, FeatureDims, Group, PlantedSpec};
use crate::distill::{DistillMode, DistillPlan, Role, DEFAULT_LAMBDA, DEFAULT_PHI, DEFAULT_PSI};
use crate::eval::{Aggregation, EvalOptions, DEFAULT_BUDGET};
use crate::error::{Error, Result};
use crate::model::{HeadCalibration, ModelConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct DataSection {
    pub num_videos: usize,
    pub segments_per_video: usize,
    pub annotators: usize,
    pub num_classes: usize,
    pub dims: FeatureDims,
    pub split: [f64; 3],
    /// Existing dataset directory; commands other than `generate` read from
    /// it.
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoleSection {
    pub hidden_dim: usize,
    pub depth: usize,
    pub exit_depths: Vec<usize>,
}

impl RoleSection {
    pub fn model_config(&self, input_dim: usize, num_classes: usize) -> ModelConfig {
        ModelConfig {
            input_dim,
            hidden_dim: self.hidden_dim,
            depth: self.depth,
            exit_depths: self.exit_depths.clone(),
            num_classes,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistillSection {
    pub mode: DistillMode,
    pub kd_source: Role,
    pub phi: f64,
    pub psi: f64,
    pub lambda: f64,
    pub temperature: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub matrix_seeds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExitSection {
    pub tau_sweep: String,
    /// F1 points (0–100 scale).
    pub max_f1_drop: f64,
    pub calib_epochs: usize,
    pub calib_batch_size: usize,
    pub calib_learning_rate: f64,
    pub repetitions: usize,
    /// Student artifact to benchmark.
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblateSection {
    pub groups: Vec<BTreeSet<Group>>,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub jobs: usize,
    pub out: PathBuf,
    pub data: DataSection,
    pub planted: PlantedSpec,
    pub teacher: RoleSection,
    pub mentor: Option<RoleSection>,
    pub student: RoleSection,
    pub distill: DistillSection,
    pub exit: ExitSection,
    pub eval: EvalOptions,
    pub ablate: AblateSection,
}

/// The planted spec used by default runs. The quadratic visual term spans
/// eight directions, so narrow networks cannot represent it through their
/// hidden bottleneck while wide ones can.
pub fn default_planted_spec() -> PlantedSpec {
    PlantedSpec {
        quadratic_weight: 1.5,
        quadratic_rank: 16,
        ..PlantedSpec::default()
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        let exits = |d: usize| (1..=d).collect::<Vec<_>>();
        Self {
            seed: 1,
            jobs: 1,
            out: PathBuf::from("runs"),
            data: DataSection {
                num_videos: 200,
                segments_per_video: 60,
                annotators: 5,
                num_classes: 5,
                dims: FeatureDims::default(),
                split: [0.7, 0.15, 0.15],
                dir: None,
            },
            planted: default_planted_spec(),
            teacher: RoleSection {
                hidden_dim: 32,
                depth: 4,
                exit_depths: vec![4],
            },
            mentor: Some(RoleSection {
                hidden_dim: 12,
                depth: 4,
                exit_depths: vec![4],
            }),
            student: RoleSection {
                hidden_dim: 6,
                depth: 4,
                exit_depths: exits(4),
            },
            distill: DistillSection {
                mode: DistillMode::MskdJoint,
                kd_source: Role::Teacher,
                phi: DEFAULT_PHI,
                psi: DEFAULT_PSI,
                lambda: DEFAULT_LAMBDA,
                temperature: 1.0,
                epochs: 50,
                batch_size: 32,
                learning_rate: 0.02,
                matrix_seeds: 5,
            },
            exit: ExitSection {
                tau_sweep: "0:1:0.01".into(),
                max_f1_drop: 3.0,
                calib_epochs: 10,
                calib_batch_size: 32,
                calib_learning_rate: 0.05,
                repetitions: 5,
                model: None,
            },
            eval: EvalOptions {
                budget_fraction: DEFAULT_BUDGET,
                aggregation: Aggregation::Mean,
            },
            ablate: AblateSection {
                groups: crate::eval::tables::default_keep_sets(),
                seeds: 5,
            },
        }
    }
}

fn parse_value<T: FromStr>(section: &str, key: &str, raw: &str) -> Result<T> {
    raw.trim()
        .parse::<T>()
        .map_err(|_| Error::Config(format!("[{section}] {key}: cannot parse {raw:?}")))
}

fn parse_list(section: &str, key: &str, raw: &str) -> Result<Vec<usize>> {
    raw.split(',')
        .map(|p| parse_value(section, key, p))
        .collect()
}

fn parse_groups(raw: &str) -> Result<Vec<BTreeSet<Group>>> {
    raw.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            let mut set = parse_keep_set(s)?;
            set.insert(Group::V);
            Ok(set)
        })
        .collect()
}

fn parse_role(raw: &str) -> Result<Role> {
    match raw.trim() {
        "teacher" => Ok(Role::Teacher),
        "mentor" => Ok(Role::Mentor),
        other => Err(Error::Config(format!(
            "[distill] kd_source must be teacher or mentor, got {other:?}"
        ))),
    }
}

fn mode_name(m: DistillMode) -> &'static str {
    match m {
        DistillMode::TeacherOnly => "teacher",
        DistillMode::KdSingle => "kd",
        DistillMode::MskdJoint => "mskd",
    }
}

fn join<T: ToString>(xs: &[T], sep: &str) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(sep)
}

pub fn groups_to_string(groups: &[BTreeSet<Group>]) -> String {
    groups
        .iter()
        .map(crate::data::keep_set_name)
        .collect::<Vec<_>>()
        .join(";")
}

impl RunConfig {
    pub fn input_dim(&self) -> usize {
        self.data.dims.total()
    }

    /// Applies one `key = value` pair.
    pub fn set(&mut self, section: &str, key: &str, raw: &str) -> Result<()> {
        let s = section;
        macro_rules! v {
            () => {
                parse_value(s, key, raw)?
            };
        }
        match (section, key) {
            ("run", "seed") => self.seed = v!(),
            ("run", "jobs") => self.jobs = v!(),
            ("run", "out") => self.out = PathBuf::from(raw.trim()),

            ("data", "num_videos") => self.data.num_videos = v!(),
            ("data", "segments_per_video") => self.data.segments_per_video = v!(),
            ("data", "annotators") => self.data.annotators = v!(),
            ("data", "num_classes") => self.data.num_classes = v!(),
            ("data", "dim_v") => self.data.dims.v = v!(),
            ("data", "dim_t") => self.data.dims.t = v!(),
            ("data", "dim_tr") => self.data.dims.tr = v!(),
            ("data", "dim_ge") => self.data.dims.ge = v!(),
            ("data", "dim_sd") => self.data.dims.sd = v!(),
            ("data", "split_train") => self.data.split[0] = v!(),
            ("data", "split_val") => self.data.split[1] = v!(),
            ("data", "split_test") => self.data.split[2] = v!(),
            ("data", "dir") => {
                let t = raw.trim();
                self.data.dir = (!t.is_empty()).then(|| PathBuf::from(t));
            }

            ("planted", "w_v") => self.planted.w_v = v!(),
            ("planted", "w_t") => self.planted.w_t = v!(),
            ("planted", "w_tr") => self.planted.w_tr = v!(),
            ("planted", "w_ge") => self.planted.w_ge = v!(),
            ("planted", "w_sd") => self.planted.w_sd = v!(),
            ("planted", "label_noise") => self.planted.label_noise = v!(),
            ("planted", "nonlinear") => self.planted.nonlinear = v!(),
            ("planted", "quadratic_weight") => self.planted.quadratic_weight = v!(),
            ("planted", "quadratic_rank") => self.planted.quadratic_rank = v!(),
            ("planted", "disagreement") => self.planted.disagreement = v!(),
            ("planted", "max_duration") => self.planted.max_duration = v!(),

            ("teacher" | "mentor" | "student", _) => {
                let role = match section {
                    "teacher" => &mut self.teacher,
                    "student" => &mut self.student,
                    _ => self.mentor.get_or_insert_with(|| RoleSection {
                        hidden_dim: 0,
                        depth: 0,
                        exit_depths: Vec::new(),
                    }),
                };
                match key {
                    "hidden_dim" => role.hidden_dim = v!(),
                    "depth" => role.depth = v!(),
                    "exit_depths" => role.exit_depths = parse_list(s, key, raw)?,
                    _ => return Err(Error::Config(format!("unknown key [{section}] {key}"))),
                }
            }

            ("distill", "mode") => self.distill.mode = raw.parse().map_err(|e: Error| Error::Config(e.to_string()))?,
            ("distill", "kd_source") => self.distill.kd_source = parse_role(raw)?,
            ("distill", "phi") => self.distill.phi = v!(),
            ("distill", "psi") => self.distill.psi = v!(),
            ("distill", "lambda") => self.distill.lambda = v!(),
            ("distill", "temperature") => self.distill.temperature = v!(),
            ("distill", "epochs") => self.distill.epochs = v!(),
            ("distill", "batch_size") => self.distill.batch_size = v!(),
            ("distill", "learning_rate") => self.distill.learning_rate = v!(),
            ("distill", "matrix_seeds") => self.distill.matrix_seeds = v!(),

            ("exit", "tau_sweep") => self.exit.tau_sweep = raw.trim().to_string(),
            ("exit", "max_f1_drop") => self.exit.max_f1_drop = v!(),
            ("exit", "calib_epochs") => self.exit.calib_epochs = v!(),
            ("exit", "calib_batch_size") => self.exit.calib_batch_size = v!(),
            ("exit", "calib_learning_rate") => self.exit.calib_learning_rate = v!(),
            ("exit", "repetitions") => self.exit.repetitions = v!(),
            ("exit", "model") => {
                let t = raw.trim();
                self.exit.model = (!t.is_empty()).then(|| PathBuf::from(t));
            }

            ("eval", "budget") => self.eval.budget_fraction = v!(),
            ("eval", "aggregation") => self.eval.aggregation = raw.parse().map_err(|e: Error| Error::Config(e.to_string()))?,

            ("ablate", "groups") => self.ablate.groups = parse_groups(raw)?,
            ("ablate", "seeds") => self.ablate.seeds = v!(),

            _ => return Err(Error::Config(format!("unknown key [{section}] {key}"))),
        }
        Ok(())
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::Parse {
            path: source.to_string(),
            line: e.line,
            msg: e.msg.to_string(),
        })?;
        let mut cfg = RunConfig {
            mentor: None,
            ..RunConfig::default()
        };
        let mut mentor_seen = false;
        for (sec, props) in ini.iter() {
            let Some(sec) = sec else {
                if props.iter().next().is_some() {
                    return Err(Error::Config("keys must sit inside a [section]".into()));
                }
                continue;
            };
            if sec == "mentor" && !mentor_seen {
                mentor_seen = true;
                cfg.mentor = RunConfig::default().mentor;
            }
            for (k, v) in props.iter() {
                cfg.set(sec, k, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text, &path.display().to_string())?;
        // relative paths inside a file are relative to that file
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.data.dir, &mut cfg.exit.model].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.jobs == 0 {
            return Err(Error::Config("[run] jobs must be >= 1".into()));
        }
        let sum: f64 = self.data.split.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.data.split.iter().any(|f| *f < 0.0) {
            return Err(Error::Config(format!(
                "[data] split fractions must be non-negative and sum to 1, got {:?}",
                self.data.split
            )));
        }
        if !(self.eval.budget_fraction > 0.0 && self.eval.budget_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "[eval] budget must lie in (0, 1], got {}",
                self.eval.budget_fraction
            )));
        }
        if !(self.exit.max_f1_drop >= 0.0) {
            return Err(Error::Config("[exit] max_f1_drop must be >= 0".into()));
        }
        crate::earlyexit::parse_tau_grid(&self.exit.tau_sweep).map_err(|e| Error::Config(format!("[exit] {e}")))?;
        if self.ablate.groups.is_empty() {
            return Err(Error::Config("[ablate] groups is empty".into()));
        }
        Ok(())
    }

    /// The distillation plan for the configured roles and mode. Mode
    /// requirements (a mentor for `mskd`) are checked here.
    pub fn plan(&self) -> Result<DistillPlan> {
        let d = self.input_dim();
        let k = self.data.num_classes;
        let plan = DistillPlan {
            teacher: self.teacher.model_config(d, k),
            mentor: self.mentor.as_ref().map(|m| m.model_config(d, k)),
            student: self.student.model_config(d, k),
            phi: self.distill.phi,
            psi: self.distill.psi,
            lambda: self.distill.lambda,
            temperature: self.distill.temperature,
            epochs: self.distill.epochs,
            batch_size: self.distill.batch_size,
            learning_rate: self.distill.learning_rate,
            seed: self.seed,
            mode: self.distill.mode,
            eval: self.eval,
        }
        .with_seed(self.seed);
        plan.validate()?;
        if self.distill.mode == DistillMode::KdSingle && self.distill.kd_source == Role::Mentor {
            plan.mentor()?;
        }
        Ok(plan)
    }

    pub fn head_calibration(&self) -> HeadCalibration {
        HeadCalibration {
            epochs: self.exit.calib_epochs,
            batch_size: self.exit.calib_batch_size,
            learning_rate: self.exit.calib_learning_rate,
            seed: self.seed,
        }
    }

    /// Seeds `seed, seed+1, …` used by the multi-seed runners.
    pub fn seed_list(&self, n: usize) -> Vec<u64> {
        (0..n as u64).map(|i| self.seed.wrapping_add(i)).collect()
    }

    /// Resolved configuration with every key spelled out.
    pub fn to_ini(&self) -> Ini {
        let mut ini = Ini::new();
        ini.with_section(Some("run"))
            .set("seed", self.seed.to_string())
            .set("jobs", self.jobs.to_string())
            .set("out", self.out.display().to_string());
        let d = &self.data;
        ini.with_section(Some("data"))
            .set("num_videos", d.num_videos.to_string())
            .set("segments_per_video", d.segments_per_video.to_string())
            .set("annotators", d.annotators.to_string())
            .set("num_classes", d.num_classes.to_string())
            .set("dim_v", d.dims.v.to_string())
            .set("dim_t", d.dims.t.to_string())
            .set("dim_tr", d.dims.tr.to_string())
            .set("dim_ge", d.dims.ge.to_string())
            .set("dim_sd", d.dims.sd.to_string())
            .set("split_train", d.split[0].to_string())
            .set("split_val", d.split[1].to_string())
            .set("split_test", d.split[2].to_string())
            .set(
                "dir",
                d.dir.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            );
        let p = &self.planted;
        ini.with_section(Some("planted"))
            .set("w_v", p.w_v.to_string())
            .set("w_t", p.w_t.to_string())
            .set("w_tr", p.w_tr.to_string())
            .set("w_ge", p.w_ge.to_string())
            .set("w_sd", p.w_sd.to_string())
            .set("label_noise", p.label_noise.to_string())
            .set("nonlinear", p.nonlinear.to_string())
            .set("quadratic_weight", p.quadratic_weight.to_string())
            .set("quadratic_rank", p.quadratic_rank.to_string())
            .set("disagreement", p.disagreement.to_string())
            .set("max_duration", p.max_duration.to_string());
        let mut role = |name: &str, r: &RoleSection| {
            ini.with_section(Some(name))
                .set("hidden_dim", r.hidden_dim.to_string())
                .set("depth", r.depth.to_string())
                .set("exit_depths", join(&r.exit_depths, ","));
        };
        role("teacher", &self.teacher);
        if let Some(m) = &self.mentor {
            role("mentor", m);
        }
        role("student", &self.student);
        let ds = &self.distill;
        ini.with_section(Some("distill"))
            .set("mode", mode_name(ds.mode))
            .set("kd_source", ds.kd_source.to_string())
            .set("phi", ds.phi.to_string())
            .set("psi", ds.psi.to_string())
            .set("lambda", ds.lambda.to_string())
            .set("temperature", ds.temperature.to_string())
            .set("epochs", ds.epochs.to_string())
            .set("batch_size", ds.batch_size.to_string())
            .set("learning_rate", ds.learning_rate.to_string())
            .set("matrix_seeds", ds.matrix_seeds.to_string());
        let e = &self.exit;
        ini.with_section(Some("exit"))
            .set("tau_sweep", e.tau_sweep.clone())
            .set("max_f1_drop", e.max_f1_drop.to_string())
            .set("calib_epochs", e.calib_epochs.to_string())
            .set("calib_batch_size", e.calib_batch_size.to_string())
            .set("calib_learning_rate", e.calib_learning_rate.to_string())
            .set("repetitions", e.repetitions.to_string())
            .set(
                "model",
                e.model.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            );
        ini.with_section(Some("eval"))
            .set("budget", self.eval.budget_fraction.to_string())
            .set("aggregation", self.eval.aggregation.to_string());
        ini.with_section(Some("ablate"))
            .set("groups", groups_to_string(&self.ablate.groups))
            .set("seeds", self.ablate.seeds.to_string());
        ini
    }

    pub fn to_ini_string(&self) -> String {
        let mut buf = Vec::new();
        self.to_ini()
            .write_to(&mut buf)
            .expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("ini output is UTF-8")
    }

    pub fn write_snapshot(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_ini_string()).map_err(|e| Error::io(path, e))
    }
}
