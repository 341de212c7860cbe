use iinlab::data::{format_letor_line, parse_letor_line, QueryDocPair};
use iinlab::eval::{acr, auc, fcr_avg, yr_avg, NavigationSession, Route};
use iinlab::models::{click_distribution, constraint_loss};
use iinlab::nn::{sigmoid, softmax};
use proptest::prelude::*;

fn brute_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li == 1 && lj == 0 {
                den += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / den
}

fn mixed_labels(n: usize) -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..=1, n).prop_filter("both classes", |l| l.contains(&0) && l.contains(&1))
}

fn scored(max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    (2..=max).prop_flat_map(|n| (prop::collection::vec((0i32..8).prop_map(f64::from), n), mixed_labels(n)))
}

fn route(ids: &[u64]) -> Route {
    Route::new(ids.iter().map(|&id| (id, id % 7 + 1))).unwrap()
}

proptest! {
    #[test]
    fn softmax_is_shift_invariant(logits in prop::collection::vec(-30.0f64..30.0, 1..8), c in -100.0f64..100.0) {
        let a = softmax(&logits);
        let shifted: Vec<f64> = logits.iter().map(|z| z + c).collect();
        let b = softmax(&shifted);
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn sigmoid_is_symmetric(x in -50.0f64..50.0) {
        prop_assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn click_distribution_is_a_distribution(r1 in 0.0f64..=1.0, a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let t = [[a, b], [1.0 - a, 1.0 - b]];
        let p = click_distribution([r1, 1.0 - r1], t);
        prop_assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|v| (0.0..=1.0 + 1e-12).contains(v)));
        prop_assert!(constraint_loss(t) >= 0.0);
        prop_assert_eq!(constraint_loss(t) == 0.0, b <= a);
    }

    #[test]
    fn auc_matches_pairwise_count((scores, labels) in scored(30)) {
        let fast = auc(&scores, &labels).unwrap();
        prop_assert!((fast - brute_auc(&scores, &labels)).abs() < 1e-12);
    }

    #[test]
    fn auc_ignores_monotone_transforms((scores, labels) in scored(30), k in 0.1f64..5.0) {
        let t: Vec<f64> = scores.iter().map(|s| (k * s).exp() - 3.0).collect();
        prop_assert_eq!(auc(&scores, &labels).unwrap(), auc(&t, &labels).unwrap());
        let flipped: Vec<f64> = scores.iter().map(|s| -s).collect();
        let sum = auc(&scores, &labels).unwrap() + auc(&flipped, &labels).unwrap();
        prop_assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn acr_grows_with_shared_segments(actual in prop::collection::btree_set(0u64..40, 1..12), extra in 40u64..80) {
        let actual_ids: Vec<u64> = actual.into_iter().collect();
        let actual = route(&actual_ids);
        let mut prev = acr(&route(&[extra]), &actual).unwrap();
        prop_assert_eq!(prev, 0.into());
        for k in 1..=actual_ids.len() {
            let cand = route(&actual_ids[..k]).with_segment(extra, 3).unwrap();
            let cur = acr(&cand, &actual).unwrap();
            prop_assert!(cur > prev);
            prev = cur;
        }
        prop_assert_eq!(prev, 1.into());
    }

    #[test]
    fn full_first_route_coverage_means_no_yaw(ids in prop::collection::btree_set(0u64..50, 1..10), n in 1usize..6) {
        let ids: Vec<u64> = ids.into_iter().collect();
        let session = NavigationSession { recommended: vec![route(&ids)], actual: route(&ids), selected: Some(1) };
        let sessions = vec![session; n];
        prop_assert_eq!(fcr_avg(&sessions).unwrap(), 1.into());
        prop_assert_eq!(yr_avg(&sessions).unwrap(), 0.into());
    }

    #[test]
    fn letor_lines_round_trip(
        grade in 0u8..=4,
        qid in 0u64..1_000_000,
        features in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::ZERO, 1..12),
    ) {
        let pair = QueryDocPair { query_id: qid, doc_id: 0, features, grade };
        let parsed = parse_letor_line(&format_letor_line(&pair), pair.features.len()).unwrap();
        prop_assert_eq!(parsed, pair);
    }
}
