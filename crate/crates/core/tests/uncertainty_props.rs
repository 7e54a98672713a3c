use arsent_core::uncertainty::{entropy, select_batch, UncertaintyScore};
use proptest::prelude::*;

/// Full sort by (entropy desc, id asc), then take k.
fn brute_force(scores: &[UncertaintyScore], k: usize) -> Vec<String> {
    let mut all: Vec<_> = scores.to_vec();
    all.sort_by(|a, b| {
        b.entropy
            .partial_cmp(&a.entropy)
            .unwrap()
            .then(a.sample_id.cmp(&b.sample_id))
    });
    all.into_iter().take(k).map(|s| s.sample_id).collect()
}

fn pool() -> impl Strategy<Value = Vec<UncertaintyScore>> {
    // entropies from a small grid so duplicates are common
    prop::collection::btree_map("[a-z]{1,4}", 0u8..8, 0..60).prop_map(|m| {
        m.into_iter()
            .map(|(sample_id, e)| UncertaintyScore {
                sample_id,
                entropy: f64::from(e) * 0.1,
            })
            .collect()
    })
}

fn distribution(max_classes: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, 2..=max_classes).prop_filter_map("zero mass", |w| {
        let total: f64 = w.iter().sum();
        (total > 1e-6).then(|| w.iter().map(|x| x / total).collect())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn selection_matches_full_sort(scores in pool(), k in 0usize..70) {
        prop_assert_eq!(select_batch(&scores, k), brute_force(&scores, k));
    }

    #[test]
    fn entropy_is_bounded_and_order_free(p in distribution(6), seed in any::<u64>()) {
        let h = entropy(&p).unwrap();
        prop_assert!(h >= 0.0 && h <= (p.len() as f64).ln() + 1e-12);
        let mut q = p.clone();
        let n = q.len();
        q.rotate_left((seed as usize) % n);
        q.swap(0, n - 1);
        prop_assert!((entropy(&q).unwrap() - h).abs() < 1e-12);
    }

    #[test]
    fn binary_entropy_is_symmetric(p in 0.0f64..=1.0) {
        let a = entropy(&[p, 1.0 - p]).unwrap();
        let b = entropy(&[1.0 - p, p]).unwrap();
        prop_assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn uniform_is_the_strict_maximum(p in distribution(5)) {
        let uniform = vec![1.0 / p.len() as f64; p.len()];
        let top = entropy(&uniform).unwrap();
        prop_assert!((top - (p.len() as f64).ln()).abs() < 1e-12);
        let spread = p.iter().map(|x| (x - 1.0 / p.len() as f64).abs()).fold(0.0, f64::max);
        if spread > 1e-3 {
            prop_assert!(entropy(&p).unwrap() < top);
        }
    }
}
