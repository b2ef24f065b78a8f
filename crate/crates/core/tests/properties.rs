use std::collections::BTreeMap;

use proptest::prelude::*;

use jargon::detect::{rank_counts, rank_order, ScoreConfig};
use jargon::evalkit::{cohens_kappa, Confusion};
use jargon::model::compute_loss;

proptest! {
    #[test]
    fn ranking_is_sorted_truncated_and_filtered(
        raw in prop::collection::btree_map("[a-e]{1,3}", (0usize..20, 1usize..20), 0..40),
        top_k in 1usize..30,
        min_occurrences in 1usize..5,
        n in 0u32..4,
    ) {
        let counts: BTreeMap<String, (usize, usize)> =
            raw.into_iter().map(|(w, (f, extra))| (w, (f, f + extra))).collect();
        let cfg = ScoreConfig { n, top_k, min_occurrences };
        let ranked = rank_counts(&counts, &cfg);
        let eligible = counts.values().filter(|(_, t)| *t >= min_occurrences).count();
        prop_assert_eq!(ranked.len(), eligible.min(top_k));
        for pair in ranked.windows(2) {
            prop_assert!(rank_order(&pair[0], &pair[1]).is_lt());
        }
        for s in &ranked {
            prop_assert!(s.total >= min_occurrences);
            let r = s.f_pred as f64 / s.total as f64;
            prop_assert!((s.score - s.f_pred as f64 * r.powi(n as i32)).abs() < 1e-12);
            prop_assert!(s.score <= s.f_pred as f64);
        }
    }

    #[test]
    fn kappa_is_symmetric_and_bounded(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..60)) {
        let (a, b): (Vec<bool>, Vec<bool>) = pairs.into_iter().unzip();
        let k = cohens_kappa(&a, &b).unwrap();
        prop_assert!((k - cohens_kappa(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&k));
        prop_assert_eq!(cohens_kappa(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn f1_lies_between_precision_and_recall(tp in 0usize..50, fp in 0usize..50, fn_ in 0usize..50, tn in 0usize..50) {
        let c = Confusion { tp, fp, fn_, tn };
        let (p, r, f) = (c.precision(), c.recall(), c.f1());
        prop_assert!((0.0..=1.0).contains(&p) && (0.0..=1.0).contains(&r));
        prop_assert!(f >= p.min(r) - 1e-12 && f <= p.max(r) + 1e-12);
    }

    #[test]
    fn ensemble_loss_is_a_convex_combination(
        batch in prop::collection::vec((0.001f64..0.999, 0.001f64..0.999, prop::bool::ANY), 1..30),
        alpha in 0.9f64..0.99,
    ) {
        let batch: Vec<(f64, f64, f64)> = batch.into_iter().map(|(a, b, y)| (a, b, y as u8 as f64)).collect();
        let l = compute_loss(&batch, alpha);
        prop_assert!(l.l_c >= 0.0 && l.l_w >= 0.0);
        prop_assert!(l.l >= l.l_c.min(l.l_w) - 1e-12 && l.l <= l.l_c.max(l.l_w) + 1e-12);
    }
}
