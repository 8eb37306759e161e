use glad_core::matcore::SymmetricMatrix;
use glad_core::metrics::{auc, edge_stats, nmse_db, prob_success, DEFAULT_EDGE_THRESHOLD};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

#[path = "support/oracles.rs"]
mod oracles;
use oracles::*;

#[test]
fn metrics_match_brute_force_oracles() {
    let mut rng = ChaCha20Rng::seed_from_u64(2024);
    for case in 0..100 {
        let batch: Vec<_> = (0..rng.gen_range(1..5)).map(|_| random_case(&mut rng)).collect();
        let (preds, truths): (Vec<_>, Vec<_>) = batch.iter().cloned().unzip();
        let thr = [0.0, DEFAULT_EDGE_THRESHOLD, 0.15][case % 3];

        let n = nmse_db(&preds, &truths).unwrap().db;
        assert!((n - brute_nmse(&preds, &truths)).abs() < 1e-12, "case {case}");
        let ps = prob_success(&preds, &truths, thr, false).unwrap();
        assert!((ps - brute_ps(&preds, &truths, thr)).abs() < 1e-12, "case {case}");
        let (p, t) = &batch[0];
        assert!((auc(p, t).unwrap() - brute_auc(p, t)).abs() < 1e-12, "case {case}");
        let s = edge_stats(p, t, thr).unwrap();
        let (fdr, tpr, fpr) = brute_edge_stats(p, t, thr);
        assert!((s.fdr - fdr).abs() < 1e-12 && (s.tpr - tpr).abs() < 1e-12 && (s.fpr - fpr).abs() < 1e-12);
    }
}

fn case_strategy() -> impl Strategy<Value = (SymmetricMatrix, SymmetricMatrix)> {
    any::<u64>().prop_map(|seed| random_case(&mut ChaCha20Rng::seed_from_u64(seed)))
}

proptest! {
    #[test]
    fn nmse_is_scale_invariant((p, t) in case_strategy(), c in prop_oneof![-100.0..-0.01f64, 0.01..100.0f64]) {
        let a = nmse_db(&[p.clone()], &[t.clone()]).unwrap();
        let b = nmse_db(&[p.scale(c)], &[t.scale(c)]).unwrap();
        prop_assert!((a.db - b.db).abs() < 1e-9, "{} vs {}", a.db, b.db);
    }

    #[test]
    fn auc_is_invariant_under_monotone_transforms((p, t) in case_strategy(), k in 0.1..3.0f64) {
        let before = auc(&p, &t).unwrap();
        // Strictly increasing in |x|, sign irrelevant to the score.
        let warped = p.map(|v| v.abs().powf(k).exp() - 1.0);
        prop_assert_eq!(before, auc(&warped, &t).unwrap());
    }

    #[test]
    fn rates_are_probabilities((p, t) in case_strategy(), thr in 0.0..0.5f64) {
        let s = edge_stats(&p, &t, thr).unwrap();
        for r in [s.fdr, s.tpr, s.fpr] {
            prop_assert!((0.0..=1.0).contains(&r));
        }
        let ps = prob_success(&[p], &[t], thr, false).unwrap();
        prop_assert!(ps == 0.0 || ps == 1.0);
    }
}
