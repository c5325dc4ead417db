//! Segment datasets: planted synthetic generation, modality masking, video
//! level splits, and the on-disk formats.

mod annotations;
mod generate;
mod io;

pub use annotations::{export_annotations, ingest_annotations, parse_annotations, save_annotations, AnnotationFormat};
pub use generate::{generate, planted_latent, GeneratorParams, PlantedSpec, SCORE_CENTER, SCORE_SPREAD};
pub use io::{read_dataset, write_dataset, load_dataset, save_dataset, DATASET_VERSION};

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::Examples;

pub const MIN_SCORE: u8 = 1;
pub const MAX_SCORE: u8 = 5;

/// Feature groups in their fixed concatenation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Group {
    /// Visual.
    V,
    /// Title affinity.
    T,
    /// Transcript.
    Tr,
    /// Gender-emotion cues.
    Ge,
    /// Speaker diarization cues.
    Sd,
}

impl Group {
    pub const ALL: [Group; 5] = [Group::V, Group::T, Group::Tr, Group::Ge, Group::Sd];

    pub fn name(self) -> &'static str {
        match self {
            Group::V => "V",
            Group::T => "T",
            Group::Tr => "Tr",
            Group::Ge => "Ge",
            Group::Sd => "Sd",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Group {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Group::ALL
            .into_iter()
            .find(|g| g.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Parameter(format!("unknown feature group {s:?}")))
    }
}

/// Parses `T+Tr+Ge` style keep-set names. `V` is implied.
pub fn parse_keep_set(s: &str) -> Result<BTreeSet<Group>> {
    let mut set = BTreeSet::new();
    for part in s.split('+').map(str::trim).filter(|p| !p.is_empty()) {
        set.insert(part.parse::<Group>()?);
    }
    if set.is_empty() {
        return Err(Error::Parameter(format!("empty keep-set {s:?}")));
    }
    Ok(set)
}

/// Display name of a keep-set with `V` left implicit, e.g. `T+Tr`.
pub fn keep_set_name(keep: &BTreeSet<Group>) -> String {
    let parts: Vec<&str> = keep
        .iter()
        .filter(|g| **g != Group::V)
        .map(|g| g.name())
        .collect();
    if parts.is_empty() {
        "V".to_string()
    } else {
        parts.join("+")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDims {
    pub v: usize,
    pub t: usize,
    pub tr: usize,
    pub ge: usize,
    pub sd: usize,
}

impl Default for FeatureDims {
    fn default() -> Self {
        Self {
            v: 16,
            t: 4,
            tr: 8,
            ge: 4,
            sd: 4,
        }
    }
}

impl FeatureDims {
    pub fn of(&self, g: Group) -> usize {
        match g {
            Group::V => self.v,
            Group::T => self.t,
            Group::Tr => self.tr,
            Group::Ge => self.ge,
            Group::Sd => self.sd,
        }
    }

    pub fn total(&self) -> usize {
        self.v + self.t + self.tr + self.ge + self.sd
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureGroups {
    #[serde(rename = "V")]
    pub v: Vec<f64>,
    #[serde(rename = "T")]
    pub t: Vec<f64>,
    #[serde(rename = "Tr")]
    pub tr: Vec<f64>,
    #[serde(rename = "Ge")]
    pub ge: Vec<f64>,
    #[serde(rename = "Sd")]
    pub sd: Vec<f64>,
}

impl FeatureGroups {
    pub fn group(&self, g: Group) -> &[f64] {
        match g {
            Group::V => &self.v,
            Group::T => &self.t,
            Group::Tr => &self.tr,
            Group::Ge => &self.ge,
            Group::Sd => &self.sd,
        }
    }

    pub fn group_mut(&mut self, g: Group) -> &mut Vec<f64> {
        match g {
            Group::V => &mut self.v,
            Group::T => &mut self.t,
            Group::Tr => &mut self.tr,
            Group::Ge => &mut self.ge,
            Group::Sd => &mut self.sd,
        }
    }

    /// Concatenation in `V, T, Tr, Ge, Sd` order.
    pub fn flatten(&self) -> Vec<f64> {
        Group::ALL.iter().flat_map(|g| self.group(*g).iter().copied()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSample {
    pub video_id: String,
    pub segment_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<FeatureGroups>,
    pub gold_scores: Vec<u8>,
    pub duration_units: u32,
}

impl SegmentSample {
    pub fn mean_score(&self) -> f64 {
        self.gold_scores.iter().map(|&s| s as f64).sum::<f64>() / self.gold_scores.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format_version: u32,
    pub dims: FeatureDims,
    pub num_classes: usize,
    pub annotators_per_segment: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorParams>,
}

impl DatasetHeader {
    pub fn new(dims: FeatureDims, num_classes: usize, annotators_per_segment: usize) -> Self {
        Self {
            format_version: DATASET_VERSION,
            dims,
            num_classes,
            annotators_per_segment,
            generator: None,
        }
    }

    /// Checks one sample against this header.
    pub fn validate_sample(&self, s: &SegmentSample) -> Result<()> {
        if s.gold_scores.is_empty() {
            return Err(Error::Validation(format!(
                "{}#{}: no annotator scores",
                s.video_id, s.segment_index
            )));
        }
        if s.gold_scores.len() != self.annotators_per_segment {
            return Err(Error::Validation(format!(
                "{}#{}: {} scores, header declares {} annotators",
                s.video_id,
                s.segment_index,
                s.gold_scores.len(),
                self.annotators_per_segment
            )));
        }
        if let Some(bad) = s.gold_scores.iter().find(|v| !(MIN_SCORE..=MAX_SCORE).contains(v)) {
            return Err(Error::Validation(format!(
                "{}#{}: score {bad} outside {MIN_SCORE}..={MAX_SCORE}",
                s.video_id, s.segment_index
            )));
        }
        if s.duration_units == 0 {
            return Err(Error::Validation(format!(
                "{}#{}: duration must be positive",
                s.video_id, s.segment_index
            )));
        }
        if let Some(f) = &s.features {
            for g in Group::ALL {
                if f.group(g).len() != self.dims.of(g) {
                    return Err(Error::Validation(format!(
                        "{}#{}: group {g} has {} features, header declares {}",
                        s.video_id,
                        s.segment_index,
                        f.group(g).len(),
                        self.dims.of(g)
                    )));
                }
                if f.group(g).iter().any(|v| !v.is_finite()) {
                    return Err(Error::Validation(format!(
                        "{}#{}: non-finite feature in group {g}",
                        s.video_id, s.segment_index
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Segments of one video in segment order.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoView {
    pub video_id: String,
    /// Sample indices into the dataset, sorted by segment index.
    pub samples: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub samples: Vec<SegmentSample>,
}

/// Training class of a segment from its annotator scores: the rounded mean
/// score for K=5, and "rounded mean ≥ 4" for K=2.
pub fn class_of_scores(mean_score: f64, num_classes: usize) -> Result<usize> {
    let r = mean_score.round().clamp(MIN_SCORE as f64, MAX_SCORE as f64) as usize;
    match num_classes {
        5 => Ok(r - 1),
        2 => Ok(usize::from(r >= 4)),
        k => Err(Error::Config(format!(
            "num_classes must be 2 or 5 for score-labelled data, got {k}"
        ))),
    }
}

impl Dataset {
    pub fn new(header: DatasetHeader, samples: Vec<SegmentSample>) -> Result<Self> {
        for s in &samples {
            header.validate_sample(s)?;
        }
        Ok(Self { header, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.header.dims.total()
    }

    /// Videos in order of first appearance.
    pub fn videos(&self) -> Vec<VideoView> {
        let mut order: Vec<String> = Vec::new();
        let mut by_id: HashMap<&str, Vec<usize>> = HashMap::new();
        for (i, s) in self.samples.iter().enumerate() {
            by_id
                .entry(s.video_id.as_str())
                .or_insert_with(|| {
                    order.push(s.video_id.clone());
                    Vec::new()
                })
                .push(i);
        }
        order
            .into_iter()
            .map(|id| {
                let mut samples = by_id.remove(id.as_str()).unwrap_or_default();
                samples.sort_by_key(|&i| self.samples[i].segment_index);
                VideoView {
                    video_id: id,
                    samples,
                }
            })
            .collect()
    }

    pub fn video_ids(&self) -> Vec<String> {
        self.videos().into_iter().map(|v| v.video_id).collect()
    }

    /// Flattened features with one training class per segment.
    pub fn examples(&self) -> Result<Examples> {
        if self.samples.is_empty() {
            return Err(Error::Data("dataset is empty".into()));
        }
        let mut rows = Vec::with_capacity(self.samples.len());
        let mut labels = Vec::with_capacity(self.samples.len());
        for s in &self.samples {
            let f = s.features.as_ref().ok_or_else(|| {
                Error::Data(format!(
                    "{}#{} has no features (evaluation-only dataset)",
                    s.video_id, s.segment_index
                ))
            })?;
            rows.push(f.flatten());
            labels.push(class_of_scores(s.mean_score(), self.header.num_classes)?);
        }
        Examples::from_rows(&rows, labels)
    }

    /// Copy with every group outside `keep ∪ {V}` replaced by zeros.
    pub fn ablate_groups(&self, keep: &BTreeSet<Group>) -> Result<Dataset> {
        if keep.is_empty() {
            return Err(Error::Parameter("keep-set must not be empty".into()));
        }
        let mut out = self.clone();
        for s in &mut out.samples {
            if let Some(f) = &mut s.features {
                for g in Group::ALL {
                    if g != Group::V && !keep.contains(&g) {
                        f.group_mut(g).iter_mut().for_each(|v| *v = 0.0);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Keeps only samples of the listed videos, preserving sample order.
    pub fn subset_videos(&self, ids: &BTreeSet<String>) -> Dataset {
        Dataset {
            header: self.header.clone(),
            samples: self
                .samples
                .iter()
                .filter(|s| ids.contains(&s.video_id))
                .cloned()
                .collect(),
        }
    }

    /// Partitions whole videos into train/val/test.
    pub fn split(&self, fractions: [f64; 3], seed: u64) -> Result<[Dataset; 3]> {
        if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::Parameter(format!("split fractions {fractions:?} outside [0, 1]")));
        }
        let total: f64 = fractions.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Parameter(format!(
                "split fractions sum to {total}, not 1"
            )));
        }
        let mut ids = self.video_ids();
        let n = ids.len();
        let n_train = ((fractions[0] * n as f64).round() as usize).min(n);
        let n_val = ((fractions[1] * n as f64).round() as usize).min(n - n_train);
        let n_test = n - n_train - n_val;
        for (f, got, name) in [
            (fractions[0], n_train, "train"),
            (fractions[1], n_val, "val"),
            (fractions[2], n_test, "test"),
        ] {
            if f > 0.0 && got == 0 {
                return Err(Error::Data(format!(
                    "{n} videos are too few for a non-empty {name} split"
                )));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ids.shuffle(&mut rng);
        let take = |range: std::ops::Range<usize>| -> BTreeSet<String> { ids[range].iter().cloned().collect() };
        let train = take(0..n_train);
        let val = take(n_train..n_train + n_val);
        let test = take(n_train + n_val..n);
        Ok([
            self.subset_videos(&train),
            self.subset_videos(&val),
            self.subset_videos(&test),
        ])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Dataset {
        let spec = PlantedSpec::default();
        let header = DatasetHeader::new(FeatureDims::default(), 5, 3);
        generate(&spec, &header, 7, 10, 3).unwrap()
    }

    #[test]
    fn keep_set_parsing() {
        let k = parse_keep_set("T+Tr").unwrap();
        assert_eq!(k.into_iter().collect::<Vec<_>>(), vec![Group::T, Group::Tr]);
        assert!(matches!(parse_keep_set("T+Xx"), Err(Error::Parameter(_))));
        assert!(parse_keep_set("").is_err());
        assert_eq!(keep_set_name(&parse_keep_set("V+T+Tr+Ge").unwrap()), "T+Tr+Ge");
    }

    #[test]
    fn ablation_contracts() {
        let d = small();
        let all: BTreeSet<Group> = Group::ALL.into_iter().collect();
        assert_eq!(d.ablate_groups(&all).unwrap(), d);

        let keep = parse_keep_set("T").unwrap();
        let once = d.ablate_groups(&keep).unwrap();
        assert_eq!(once.ablate_groups(&keep).unwrap(), once);
        for s in &once.samples {
            let f = s.features.as_ref().unwrap();
            assert!(f.tr.iter().chain(&f.ge).chain(&f.sd).all(|v| *v == 0.0));
            assert_eq!(f.v, d.samples[0].features.as_ref().map(|_| f.v.clone()).unwrap());
            assert_eq!(f.v.len(), 16);
        }
        assert!(matches!(d.ablate_groups(&BTreeSet::new()), Err(Error::Parameter(_))));
    }

    #[test]
    fn split_partitions_videos() {
        let d = small();
        let [tr, va, te] = d.split([0.6, 0.2, 0.2], 4).unwrap();
        let mut all: Vec<String> = tr.video_ids();
        all.extend(va.video_ids());
        all.extend(te.video_ids());
        assert_eq!(all.len(), 7);
        let set: BTreeSet<String> = all.iter().cloned().collect();
        assert_eq!(set.len(), 7);
        assert_eq!(set, d.video_ids().into_iter().collect());
        assert_eq!(tr.len() + va.len() + te.len(), d.len());

        let again = d.split([0.6, 0.2, 0.2], 4).unwrap();
        assert_eq!(again[0], tr);

        let [only, e1, e2] = d.split([1.0, 0.0, 0.0], 4).unwrap();
        assert_eq!(only.len(), d.len());
        assert!(e1.is_empty() && e2.is_empty());
    }

    #[test]
    fn split_errors() {
        let d = small();
        assert!(matches!(d.split([0.5, 0.2, 0.2], 0), Err(Error::Parameter(_))));
        let tiny = d.subset_videos(&d.video_ids().into_iter().take(2).collect());
        assert!(matches!(tiny.split([0.4, 0.3, 0.3], 0), Err(Error::Data(_))));
    }

    #[test]
    fn class_mapping() {
        assert_eq!(class_of_scores(1.0, 5).unwrap(), 0);
        assert_eq!(class_of_scores(4.6, 5).unwrap(), 4);
        assert_eq!(class_of_scores(3.4, 2).unwrap(), 0);
        assert_eq!(class_of_scores(3.6, 2).unwrap(), 1);
        assert!(class_of_scores(3.0, 3).is_err());
    }

    #[test]
    fn videos_sorted_by_segment() {
        let mut d = small();
        d.samples.reverse();
        for v in d.videos() {
            let segs: Vec<usize> = v.samples.iter().map(|&i| d.samples[i].segment_index).collect();
            assert!(segs.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
