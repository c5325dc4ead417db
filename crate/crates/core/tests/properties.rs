use proptest::prelude::*;

use kdexit::earlyexit::RoutingPolicy;
use kdexit::eval::{f1_against_reference, f1_multi_reference, select_summary, Aggregation, VALUE_TOL};
use kdexit::numerics::{cosine_similarity, kl_divergence, softmax, Distribution};

fn logits(k: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-20.0..20.0f64, k)
}

fn distribution(k: usize) -> impl Strategy<Value = Distribution> {
    prop::collection::vec(0.01..1.0f64, k).prop_map(|v| {
        let s: f64 = v.iter().sum();
        Distribution::new(v.iter().map(|x| x / s).collect()).unwrap()
    })
}

/// Durations with two random subsets of the same length.
fn selection_case() -> impl Strategy<Value = (Vec<u32>, Vec<usize>, Vec<usize>)> {
    (1usize..30).prop_flat_map(|n| {
        (
            prop::collection::vec(1u32..6, n),
            prop::collection::vec(any::<bool>(), n),
            prop::collection::vec(any::<bool>(), n),
        )
            .prop_map(|(d, a, b)| {
                let pick = |m: Vec<bool>| m.iter().enumerate().filter(|(_, &t)| t).map(|(i, _)| i).collect();
                (d, pick(a), pick(b))
            })
    })
}

proptest! {
    #[test]
    fn softmax_sums_to_one_and_ignores_shifts(z in logits(2..8), c in -50.0..50.0f64, t in 0.25..4.0f64) {
        let p = softmax(&z, t).unwrap();
        let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
        let q = softmax(&shifted, t).unwrap();
        prop_assert!((p.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (a, b) in p.probs().iter().zip(q.probs()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn kl_is_non_negative_and_zero_on_self(
        (p, q) in (2usize..7).prop_flat_map(|k| (distribution(k), distribution(k)))
    ) {
        prop_assert!(kl_divergence(&p, &q).unwrap() >= 0.0);
        prop_assert!(kl_divergence(&p, &p).unwrap().abs() < 1e-12);
    }

    #[test]
    fn cosine_ignores_positive_scale(
        (a, b) in (2usize..8).prop_flat_map(|k| (prop::collection::vec(0.01..5.0f64, k), prop::collection::vec(0.01..5.0f64, k))),
        s in 0.01..100.0f64,
    ) {
        let base = cosine_similarity(&a, &b).unwrap();
        let scaled: Vec<f64> = a.iter().map(|x| x * s).collect();
        prop_assert!((cosine_similarity(&scaled, &b).unwrap() - base).abs() < 1e-12);
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&base));
    }

    #[test]
    fn f1_identity_and_symmetry((d, s, g) in selection_case()) {
        let same = f1_against_reference(&s, &s, &d).unwrap();
        prop_assert_eq!(same.f1, if s.is_empty() { 0.0 } else { 1.0 });
        let ab = f1_against_reference(&s, &g, &d).unwrap();
        let ba = f1_against_reference(&g, &s, &d).unwrap();
        prop_assert!((ab.f1 - ba.f1).abs() < 1e-15);
        prop_assert_eq!(ab.precision, ba.recall);
        prop_assert!((0.0..=1.0).contains(&ab.f1));
    }

    #[test]
    fn max_aggregation_dominates_mean((d, s, g) in selection_case(), extra in any::<u64>()) {
        let h: Vec<usize> = (0..d.len()).filter(|i| extra >> (i % 64) & 1 == 1).collect();
        let refs = vec![g, h];
        let mean = f1_multi_reference(&s, &refs, &d, Aggregation::Mean).unwrap();
        let max = f1_multi_reference(&s, &refs, &d, Aggregation::Max).unwrap();
        prop_assert!(max.f1 >= mean.f1 - 1e-15);
    }

    #[test]
    fn knapsack_matches_exhaustive_search(
        (scores, durations) in (1usize..11).prop_flat_map(|n| (
            prop::collection::vec(-2.0..10.0f64, n),
            prop::collection::vec(1u32..5, n),
        )),
        budget in 0.05..1.0f64,
    ) {
        let sel = select_summary(&scores, &durations, budget).unwrap();
        let total: u64 = durations.iter().map(|&d| d as u64).sum();
        let cap = kdexit::eval::budget_capacity(total, budget);
        prop_assert!(sel.selected_duration <= cap);
        let n = scores.len();
        let mut best = 0.0f64;
        for mask in 0u32..(1 << n) {
            let dur: u64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| durations[i] as u64).sum();
            if dur <= cap {
                best = best.max((0..n).filter(|i| mask >> i & 1 == 1).map(|i| scores[i]).sum());
            }
        }
        let got: f64 = sel.selected.iter().map(|&i| scores[i]).sum();
        prop_assert!((got - best).abs() <= 1e-6 * (1.0 + best.abs()) + VALUE_TOL);
    }

    #[test]
    fn routing_threshold_is_monotone(g in 0.0..1.0f64, a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (lo, hi) = (RoutingPolicy::new(lo).unwrap(), RoutingPolicy::new(hi).unwrap());
        // a lower threshold accepts whatever a higher one accepts
        prop_assert!(!hi.accepts(g) || lo.accepts(g));
        prop_assert!(!RoutingPolicy::no_early_exit().accepts(g));
        prop_assert!(RoutingPolicy::new(0.0).unwrap().accepts(g));
    }
}
