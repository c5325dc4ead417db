use crate::error::{Error, Result};

/// Values closer than this are treated as equal when breaking ties.
pub const VALUE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SummarySelection {
    pub video_id: String,
    /// Selected positions within the video, ascending.
    pub selected: Vec<usize>,
    pub budget_fraction: f64,
    pub selected_duration: u64,
    pub total_duration: u64,
}

/// Largest whole number of duration units the budget allows.
pub fn budget_capacity(total_duration: u64, budget_fraction: f64) -> u64 {
    (budget_fraction * total_duration as f64 + 1e-9).floor() as u64
}

/// Exact 0/1 knapsack over integer durations maximizing the summed score.
///
/// Among optimal sets the one that includes the lowest-indexed segments is
/// returned: decisions are made in index order and an item is taken
/// whenever taking it is still optimal.
pub fn select_summary(scores: &[f64], durations: &[u32], budget_fraction: f64) -> Result<SummarySelection> {
    if scores.len() != durations.len() {
        return Err(Error::Dimension(format!(
            "{} scores for {} durations",
            scores.len(),
            durations.len()
        )));
    }
    if !(budget_fraction > 0.0 && budget_fraction <= 1.0) {
        return Err(Error::Parameter(format!(
            "budget fraction {budget_fraction} outside (0, 1]"
        )));
    }
    if let Some(i) = durations.iter().position(|&d| d == 0) {
        return Err(Error::Data(format!("segment {i} has non-positive duration")));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::Data(format!("segment {i} has a non-finite score")));
    }
    let n = scores.len();
    let total: u64 = durations.iter().map(|&d| d as u64).sum();
    let cap = budget_capacity(total, budget_fraction) as usize;

    // best[i][c]: optimum over items i.. with capacity c.
    let width = cap + 1;
    let mut best = vec![0.0f64; (n + 1) * width];
    for i in (0..n).rev() {
        let d = durations[i] as usize;
        for c in 0..=cap {
            let skip = best[(i + 1) * width + c];
            let take = if d <= c {
                scores[i] + best[(i + 1) * width + c - d]
            } else {
                f64::NEG_INFINITY
            };
            best[i * width + c] = skip.max(take);
        }
    }

    let mut selected = Vec::new();
    let mut c = cap;
    for i in 0..n {
        let d = durations[i] as usize;
        if d > c {
            continue;
        }
        let skip = best[(i + 1) * width + c];
        let take = scores[i] + best[(i + 1) * width + c - d];
        if take >= skip - VALUE_TOL * (1.0 + skip.abs()) {
            selected.push(i);
            c -= d;
        }
    }
    let selected_duration = selected.iter().map(|&i| durations[i] as u64).sum();
    Ok(SummarySelection {
        video_id: String::new(),
        selected,
        budget_fraction,
        selected_duration,
        total_duration: total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_durations_pick_top_k() {
        let scores: Vec<f64> = (0..20).map(|i| ((i * 37) % 20) as f64 + 0.5).collect();
        let sel = select_summary(&scores, &[1; 20], 0.15).unwrap();
        assert_eq!(sel.selected.len(), 3);
        let mut order: Vec<usize> = (0..20).collect();
        order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
        let mut top: Vec<usize> = order[..3].to_vec();
        top.sort();
        assert_eq!(sel.selected, top);
    }

    #[test]
    fn sixty_uniform_segments_budget_nine() {
        assert_eq!(budget_capacity(60, 0.15), 9);
        let scores: Vec<f64> = (0..60).map(|i| (i as f64 * 0.7).sin()).collect();
        assert_eq!(select_summary(&scores, &[1; 60], 0.15).unwrap().selected.len(), 9);
    }

    #[test]
    fn full_budget_selects_everything() {
        let sel = select_summary(&[3.0, 1.0, 2.5], &[2, 1, 3], 1.0).unwrap();
        assert_eq!(sel.selected, vec![0, 1, 2]);
        assert_eq!(sel.selected_duration, 6);
    }

    #[test]
    fn ties_prefer_lower_index() {
        let sel = select_summary(&[2.0, 2.0, 2.0, 2.0], &[1; 4], 0.5).unwrap();
        assert_eq!(sel.selected, vec![0, 1]);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(select_summary(&[1.0], &[0], 0.5), Err(Error::Data(_))));
        assert!(select_summary(&[1.0], &[1], 0.0).is_err());
        assert!(select_summary(&[1.0], &[1], 1.5).is_err());
        assert!(select_summary(&[1.0, 2.0], &[1], 0.5).is_err());
    }

    #[test]
    fn respects_budget_with_mixed_durations() {
        let sel = select_summary(&[5.0, 4.0, 3.0, 1.0], &[3, 2, 2, 1], 0.5).unwrap();
        assert!(sel.selected_duration <= 4);
        assert_eq!(sel.selected, vec![1, 2]);
    }
}
