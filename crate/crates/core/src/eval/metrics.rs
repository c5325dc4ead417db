use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Aggregation {
    /// Average over references (TVSum convention).
    #[default]
    Mean,
    /// Best reference (SumMe convention).
    Max,
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregation::Mean => "mean",
            Aggregation::Max => "max",
        })
    }
}

impl FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mean" => Ok(Aggregation::Mean),
            "max" => Ok(Aggregation::Max),
            other => Err(Error::Parameter(format!(
                "aggregation must be mean or max, got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrfScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl PrfScore {
    /// F1 from precision and recall; zero when both are zero.
    pub fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
        }
    }
}

/// Scores of one selection against one or more references.
///
/// With a single reference, or in max mode, the headline precision, recall
/// and F1 belong to one reference. In mean mode each is the average of the
/// per-reference values, so the headline F1 is the mean of per-reference
/// F1 scores rather than the harmonic mean of the averaged P and R.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub aggregation: Aggregation,
    pub per_reference: Vec<PrfScore>,
}

fn check_indices(set: &[usize], durations: &[u32], what: &str) -> Result<()> {
    if let Some(&i) = set.iter().find(|&&i| i >= durations.len()) {
        return Err(Error::Data(format!(
            "{what} index {i} outside 0..{}",
            durations.len()
        )));
    }
    Ok(())
}

/// Precision, recall and F1 of `selected` against `reference`, counted in
/// duration units. An empty selection has precision 0 and an empty
/// reference has recall 0.
pub fn f1_against_reference(selected: &[usize], reference: &[usize], durations: &[u32]) -> Result<EvalResult> {
    check_indices(selected, durations, "selection")?;
    check_indices(reference, durations, "reference")?;
    let mut in_s = vec![false; durations.len()];
    for &i in selected {
        in_s[i] = true;
    }
    let mut in_g = vec![false; durations.len()];
    for &i in reference {
        in_g[i] = true;
    }
    let mut s_units = 0u64;
    let mut g_units = 0u64;
    let mut both = 0u64;
    for (i, &d) in durations.iter().enumerate() {
        let d = d as u64;
        if in_s[i] {
            s_units += d;
        }
        if in_g[i] {
            g_units += d;
        }
        if in_s[i] && in_g[i] {
            both += d;
        }
    }
    let precision = if s_units == 0 { 0.0 } else { both as f64 / s_units as f64 };
    let recall = if g_units == 0 { 0.0 } else { both as f64 / g_units as f64 };
    let score = PrfScore::from_pr(precision, recall);
    Ok(EvalResult {
        precision: score.precision,
        recall: score.recall,
        f1: score.f1,
        aggregation: Aggregation::Mean,
        per_reference: vec![score],
    })
}

pub fn f1_multi_reference(
    selected: &[usize],
    references: &[Vec<usize>],
    durations: &[u32],
    mode: Aggregation,
) -> Result<EvalResult> {
    if references.is_empty() {
        return Err(Error::Parameter("at least one reference is required".into()));
    }
    let mut per = Vec::with_capacity(references.len());
    for g in references {
        per.push(f1_against_reference(selected, g, durations)?.per_reference[0]);
    }
    let (precision, recall, f1) = match mode {
        Aggregation::Mean => {
            let n = per.len() as f64;
            (
                per.iter().map(|s| s.precision).sum::<f64>() / n,
                per.iter().map(|s| s.recall).sum::<f64>() / n,
                per.iter().map(|s| s.f1).sum::<f64>() / n,
            )
        }
        Aggregation::Max => {
            let mut best = per[0];
            for s in &per[1..] {
                if s.f1 > best.f1 {
                    best = *s;
                }
            }
            (best.precision, best.recall, best.f1)
        }
    };
    Ok(EvalResult {
        precision,
        recall,
        f1,
        aggregation: mode,
        per_reference: per,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_disjoint() {
        let d = [1u32; 6];
        let r = f1_against_reference(&[0, 2, 4], &[0, 2, 4], &d).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
        let r = f1_against_reference(&[0, 1], &[2, 3], &d).unwrap();
        assert_eq!(r.f1, 0.0);
    }

    #[test]
    fn worked_arithmetic() {
        // |G∩S| = 2, |S| = 4, |G| = 3
        let d = [1u32; 8];
        let r = f1_against_reference(&[0, 1, 2, 3], &[2, 3, 7], &d).unwrap();
        assert!((r.precision - 0.5).abs() < 1e-15);
        assert!((r.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.f1 - 4.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn durations_weight_the_overlap() {
        let d = [3u32, 1, 1];
        let r = f1_against_reference(&[0, 1], &[0, 2], &d).unwrap();
        assert!((r.precision - 0.75).abs() < 1e-15);
        assert!((r.recall - 0.75).abs() < 1e-15);
    }

    #[test]
    fn empty_sets_follow_zero_convention() {
        let d = [1u32; 3];
        let r = f1_against_reference(&[], &[1], &d).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
        let r = f1_against_reference(&[1], &[], &d).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn out_of_range_index_is_data_error() {
        assert!(matches!(
            f1_against_reference(&[5], &[0], &[1, 1]),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn multi_reference_aggregation() {
        let d = [1u32; 6];
        let s = [0, 1, 2];
        let single = f1_multi_reference(&s, &[vec![1, 2, 3]], &d, Aggregation::Mean).unwrap();
        let direct = f1_against_reference(&s, &[1, 2, 3], &d).unwrap();
        assert_eq!(single.f1, direct.f1);

        let same = vec![vec![1, 2, 3]; 3];
        let mean = f1_multi_reference(&s, &same, &d, Aggregation::Mean).unwrap();
        let max = f1_multi_reference(&s, &same, &d, Aggregation::Max).unwrap();
        assert!((mean.f1 - max.f1).abs() < 1e-15);

        let refs = vec![vec![0, 1, 2], vec![3, 4, 5], vec![0, 4, 5]];
        let mean = f1_multi_reference(&s, &refs, &d, Aggregation::Mean).unwrap();
        let max = f1_multi_reference(&s, &refs, &d, Aggregation::Max).unwrap();
        assert!(max.f1 >= mean.f1);
        assert_eq!(max.f1, 1.0);
        assert!(f1_multi_reference(&s, &[], &d, Aggregation::Mean).is_err());
    }

    #[test]
    fn aggregation_parses() {
        assert_eq!("MAX".parse::<Aggregation>().unwrap(), Aggregation::Max);
        assert!("median".parse::<Aggregation>().is_err());
    }
}
