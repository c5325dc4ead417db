//! Planted-signal generator.
//!
//! Every feature is drawn i.i.d. standard normal. Each group `g` owns a unit
//! direction `d_g`, and the latent importance of a segment is
//!
//! ```text
//! u = Σ_g w_g ⟨x_g, d_g⟩  +  [nonlinear] q · (⟨x_V, e_V⟩² − 1) / √2
//! ```
//!
//! Each term has unit variance, so `u` is standardized by
//! `sqrt(Σ w_g² + q²)` before being mapped onto the 1..5 score scale.
//! Annotators add independent Gaussian noise and occasionally disagree by one
//! point. The directions are stored in the dataset header so the labels can
//! be re-derived from the features.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetHeader, FeatureDims, FeatureGroups, Group, SegmentSample, MAX_SCORE, MIN_SCORE};
use crate::error::{Error, Result};

/// Score assigned to a segment with average latent importance.
pub const SCORE_CENTER: f64 = 3.0;
/// Score points per standard deviation of latent importance.
pub const SCORE_SPREAD: f64 = 1.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub w_v: f64,
    pub w_t: f64,
    pub w_tr: f64,
    pub w_ge: f64,
    pub w_sd: f64,
    /// Standard deviation of per-annotator score noise.
    pub label_noise: f64,
    pub nonlinear: bool,
    /// Weight of the quadratic visual term when `nonlinear` is set.
    pub quadratic_weight: f64,
    /// Number of orthogonal visual directions the quadratic term spans.
    pub quadratic_rank: usize,
    /// Probability that an annotator shifts a score by one point.
    pub disagreement: f64,
    /// Segments last `1..=max_duration` units; 1 gives uniform shots.
    pub max_duration: u32,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        Self {
            w_v: 1.0,
            w_t: 0.6,
            w_tr: 0.6,
            w_ge: 0.45,
            w_sd: 0.0,
            label_noise: 0.5,
            nonlinear: true,
            quadratic_weight: 0.8,
            quadratic_rank: 1,
            disagreement: 0.1,
            max_duration: 1,
        }
    }
}

impl PlantedSpec {
    pub fn weight(&self, g: Group) -> f64 {
        match g {
            Group::V => self.w_v,
            Group::T => self.w_t,
            Group::Tr => self.w_tr,
            Group::Ge => self.w_ge,
            Group::Sd => self.w_sd,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ws = Group::ALL.map(|g| self.weight(g));
        if ws.iter().any(|w| !w.is_finite()) {
            return Err(Error::Validation("group weights must be finite".into()));
        }
        if ws.iter().all(|w| *w == 0.0) {
            return Err(Error::Validation(
                "at least one group weight must be non-zero".into(),
            ));
        }
        if !(self.label_noise >= 0.0) || !self.label_noise.is_finite() {
            return Err(Error::Validation(format!(
                "label_noise must be >= 0, got {}",
                self.label_noise
            )));
        }
        if !(0.0..=1.0).contains(&self.disagreement) {
            return Err(Error::Validation(format!(
                "disagreement must be a probability, got {}",
                self.disagreement
            )));
        }
        if !self.quadratic_weight.is_finite() {
            return Err(Error::Validation("quadratic_weight must be finite".into()));
        }
        if self.nonlinear && self.quadratic_rank == 0 {
            return Err(Error::Validation("quadratic_rank must be >= 1".into()));
        }
        if self.max_duration == 0 {
            return Err(Error::Validation("max_duration must be >= 1".into()));
        }
        Ok(())
    }

    fn latent_scale(&self) -> f64 {
        let mut v: f64 = Group::ALL.iter().map(|g| self.weight(*g).powi(2)).sum();
        if self.nonlinear {
            v += self.quadratic_weight.powi(2);
        }
        v.sqrt()
    }
}

/// Everything needed to re-derive the planted labels; stored in the header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub spec: PlantedSpec,
    pub seed: u64,
    /// Unit direction per group, in `V, T, Tr, Ge, Sd` order.
    pub directions: Vec<Vec<f64>>,
    /// Orthonormal visual directions of the quadratic term.
    pub quadratic_directions: Vec<Vec<f64>>,
}

fn unit_direction(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    if dim == 0 {
        return Vec::new();
    }
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-8 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// `count` orthonormal directions by Gram-Schmidt over Gaussian draws.
fn orthonormal_directions(rng: &mut ChaCha8Rng, dim: usize, count: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(count);
    while out.len() < count {
        let mut v = unit_direction(rng, dim);
        for e in &out {
            let c: f64 = v.iter().zip(e).map(|(a, b)| a * b).sum();
            for (a, b) in v.iter_mut().zip(e) {
                *a -= c * b;
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            out.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    out
}

/// Standardized latent importance of one feature set.
pub fn planted_latent(params: &GeneratorParams, f: &FeatureGroups) -> f64 {
    let spec = &params.spec;
    let mut u = 0.0;
    for (g, dir) in Group::ALL.iter().zip(&params.directions) {
        let proj: f64 = f.group(*g).iter().zip(dir).map(|(x, d)| x * d).sum();
        u += spec.weight(*g) * proj;
    }
    if spec.nonlinear {
        // each (p² − 1) has variance 2 for independent unit projections
        let r = params.quadratic_directions.len() as f64;
        let q: f64 = params
            .quadratic_directions
            .iter()
            .map(|e| {
                let p: f64 = f.v.iter().zip(e).map(|(x, d)| x * d).sum();
                p * p - 1.0
            })
            .sum();
        u += spec.quadratic_weight * q / (2.0 * r).sqrt();
    }
    u / spec.latent_scale()
}

/// Builds `num_videos × segments_per_video` segments from a planted spec.
/// The returned header is `header` with the generator parameters filled in.
pub fn generate(
    spec: &PlantedSpec,
    header: &DatasetHeader,
    num_videos: usize,
    segments_per_video: usize,
    seed: u64,
) -> Result<Dataset> {
    spec.validate()?;
    if num_videos == 0 || segments_per_video == 0 {
        return Err(Error::Validation(
            "num_videos and segments_per_video must be >= 1".into(),
        ));
    }
    if header.annotators_per_segment == 0 {
        return Err(Error::Validation("need at least one annotator".into()));
    }
    let dims: FeatureDims = header.dims;
    if dims.v == 0 {
        return Err(Error::Validation("visual group needs at least one feature".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let directions: Vec<Vec<f64>> = Group::ALL
        .iter()
        .map(|g| unit_direction(&mut rng, dims.of(*g)))
        .collect();
    let rank = if spec.nonlinear { spec.quadratic_rank } else { 0 };
    if rank > dims.v {
        return Err(Error::Validation(format!(
            "quadratic_rank {rank} exceeds the visual dimension {}",
            dims.v
        )));
    }
    let quadratic_directions = orthonormal_directions(&mut rng, dims.v, rank);
    let params = GeneratorParams {
        spec: spec.clone(),
        seed,
        directions,
        quadratic_directions,
    };

    let mut samples = Vec::with_capacity(num_videos * segments_per_video);
    for v in 0..num_videos {
        let video_id = format!("video_{v:04}");
        for seg in 0..segments_per_video {
            let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.sample(StandardNormal)).collect() };
            let features = FeatureGroups {
                v: draw(dims.v),
                t: draw(dims.t),
                tr: draw(dims.tr),
                ge: draw(dims.ge),
                sd: draw(dims.sd),
            };
            let u = planted_latent(&params, &features);
            let base = SCORE_CENTER + SCORE_SPREAD * u;
            let gold_scores = (0..header.annotators_per_segment)
                .map(|_| {
                    let noise: f64 = if spec.label_noise > 0.0 {
                        spec.label_noise * rng.sample::<f64, _>(StandardNormal)
                    } else {
                        0.0
                    };
                    let mut s = (base + noise).round();
                    if spec.disagreement > 0.0 && rng.random::<f64>() < spec.disagreement {
                        s += if rng.random::<bool>() { 1.0 } else { -1.0 };
                    }
                    s.clamp(MIN_SCORE as f64, MAX_SCORE as f64) as u8
                })
                .collect();
            let duration_units = if spec.max_duration > 1 {
                rng.random_range(1..=spec.max_duration)
            } else {
                1
            };
            samples.push(SegmentSample {
                video_id: video_id.clone(),
                segment_index: seg,
                features: Some(features),
                gold_scores,
                duration_units,
            });
        }
    }
    let mut header = header.clone();
    header.generator = Some(params);
    Dataset::new(header, samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(annotators: usize) -> DatasetHeader {
        DatasetHeader::new(FeatureDims::default(), 5, annotators)
    }

    #[test]
    fn same_seed_same_dataset() {
        let a = generate(&PlantedSpec::default(), &header(3), 3, 8, 42).unwrap();
        let b = generate(&PlantedSpec::default(), &header(3), 3, 8, 42).unwrap();
        assert_eq!(a, b);
        let c = generate(&PlantedSpec::default(), &header(3), 3, 8, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_invalid_spec() {
        let zero = PlantedSpec {
            w_v: 0.0,
            w_t: 0.0,
            w_tr: 0.0,
            w_ge: 0.0,
            w_sd: 0.0,
            ..PlantedSpec::default()
        };
        assert!(matches!(
            generate(&zero, &header(1), 1, 1, 0),
            Err(Error::Validation(_))
        ));
        let bad_noise = PlantedSpec {
            label_noise: -1.0,
            ..PlantedSpec::default()
        };
        assert!(generate(&bad_noise, &header(1), 1, 1, 0).is_err());
        assert!(generate(&PlantedSpec::default(), &header(1), 0, 1, 0).is_err());
    }

    #[test]
    fn durations_follow_spec() {
        let spec = PlantedSpec {
            max_duration: 4,
            ..PlantedSpec::default()
        };
        let d = generate(&spec, &header(2), 2, 50, 1).unwrap();
        assert!(d.samples.iter().all(|s| (1..=4).contains(&s.duration_units)));
        assert!(d.samples.iter().any(|s| s.duration_units > 1));
    }
}
