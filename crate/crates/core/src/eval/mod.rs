//! Budgeted summary selection and F1 scoring against annotator references.

mod knapsack;
mod metrics;
pub mod tables;

pub use knapsack::{budget_capacity, select_summary, SummarySelection, VALUE_TOL};
pub use metrics::{f1_against_reference, f1_multi_reference, Aggregation, EvalResult, PrfScore};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, VideoView};
use crate::error::{Error, Result};
use crate::model::ExitableModel;

/// Default summary budget as a fraction of video duration.
pub const DEFAULT_BUDGET: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub budget_fraction: f64,
    pub aggregation: Aggregation,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            budget_fraction: DEFAULT_BUDGET,
            aggregation: Aggregation::Mean,
        }
    }
}

/// Scalar importance of a class distribution: the expected 1-based score,
/// or the positive-class probability for binary heads.
pub fn importance_score(probs: &[f64]) -> f64 {
    if probs.len() == 2 {
        probs[1]
    } else {
        probs.iter().enumerate().map(|(k, p)| (k + 1) as f64 * p).sum()
    }
}

/// One reference selection per annotator, each budget-selected from that
/// annotator's gold scores.
pub fn reference_selections(dataset: &Dataset, video: &VideoView, budget: f64) -> Result<Vec<Vec<usize>>> {
    let durations = video_durations(dataset, video);
    let annotators = dataset.header.annotators_per_segment;
    (0..annotators)
        .map(|a| {
            let scores: Vec<f64> = video
                .samples
                .iter()
                .map(|&i| dataset.samples[i].gold_scores[a] as f64)
                .collect();
            Ok(select_summary(&scores, &durations, budget)?.selected)
        })
        .collect()
}

pub fn video_durations(dataset: &Dataset, video: &VideoView) -> Vec<u32> {
    video
        .samples
        .iter()
        .map(|&i| dataset.samples[i].duration_units)
        .collect()
}

/// Scores one video given per-sample predicted importance (indexed like
/// `dataset.samples`).
pub fn score_video(dataset: &Dataset, video: &VideoView, predicted: &[f64], opts: &EvalOptions) -> Result<EvalResult> {
    let durations = video_durations(dataset, video);
    let scores: Vec<f64> = video.samples.iter().map(|&i| predicted[i]).collect();
    let mut sel = select_summary(&scores, &durations, opts.budget_fraction)?;
    sel.video_id = video.video_id.clone();
    let refs = reference_selections(dataset, video, opts.budget_fraction)?;
    f1_multi_reference(&sel.selected, &refs, &durations, opts.aggregation)
}

/// Mean per-video F1 (a fraction in [0, 1]) of predicted importance scores.
pub fn dataset_f1(dataset: &Dataset, predicted: &[f64], opts: &EvalOptions) -> Result<f64> {
    if predicted.len() != dataset.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} samples",
            predicted.len(),
            dataset.len()
        )));
    }
    let videos = dataset.videos();
    if videos.is_empty() {
        return Err(Error::Data("no videos to evaluate".into()));
    }
    let mut total = 0.0;
    for v in &videos {
        total += score_video(dataset, v, predicted, opts)?.f1;
    }
    Ok(total / videos.len() as f64)
}

/// Full-depth importance predictions of a model for every sample.
pub fn predict_importance(model: &ExitableModel, dataset: &Dataset) -> Result<Vec<f64>> {
    let ex = dataset.examples()?;
    let probs = model.predict_rows(ex.features(), 1.0)?;
    Ok(probs
        .values()
        .chunks(model.num_classes())
        .map(importance_score)
        .collect())
}

pub fn model_f1(model: &ExitableModel, dataset: &Dataset, opts: &EvalOptions) -> Result<f64> {
    dataset_f1(dataset, &predict_importance(model, dataset)?, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn importance_of_distributions() {
        assert!((importance_score(&[0.0, 0.0, 0.0, 0.0, 1.0]) - 5.0).abs() < 1e-15);
        assert!((importance_score(&[0.2; 5]) - 3.0).abs() < 1e-12);
        assert_eq!(importance_score(&[0.3, 0.7]), 0.7);
    }
}
