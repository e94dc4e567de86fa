//! Ranking metrics against a brute-force evaluator written from the
//! definitions, plus the order-only and range invariants.

use std::collections::{BTreeMap, BTreeSet};

use covex_core::eval::{average_precision, ndcg_at_k, pearson, recall_at_k, Judgments};
use proptest::prelude::*;

/// DCG of an explicit grade sequence.
fn dcg(grades: &[u32]) -> f64 {
    grades
        .iter()
        .enumerate()
        .map(|(i, &g)| (2f64.powi(g as i32) - 1.0) / ((i + 2) as f64).log2())
        .sum()
}

/// Every permutation of `items`.
fn permutations(items: &[u32]) -> Vec<Vec<u32>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

fn oracle_ndcg(ranked: &[String], judged: &Judgments, k: usize) -> f64 {
    let grades: Vec<u32> = ranked.iter().take(k).map(|d| *judged.get(d).unwrap_or(&0)).collect();
    let positive: Vec<u32> = judged.values().copied().filter(|&g| g > 0).collect();
    // Ideal DCG: best arrangement over every ordering of the judged grades.
    let ideal = permutations(&positive)
        .iter()
        .map(|p| dcg(&p[..p.len().min(k)]))
        .fold(0.0, f64::max);
    if ideal == 0.0 {
        0.0
    } else {
        dcg(&grades) / ideal
    }
}

fn oracle_ap(ranked: &[String], judged: &Judgments) -> f64 {
    let relevant: BTreeSet<&String> = judged.iter().filter(|(_, &g)| g > 0).map(|(d, _)| d).collect();
    if relevant.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for (pos, d) in ranked.iter().enumerate() {
        if relevant.contains(d) {
            let prefix = &ranked[..=pos];
            let rel_in_prefix = prefix.iter().filter(|x| relevant.contains(x)).count();
            total += rel_in_prefix as f64 / prefix.len() as f64;
        }
    }
    total / relevant.len() as f64
}

fn oracle_recall(ranked: &[String], judged: &Judgments, k: usize) -> f64 {
    let relevant: BTreeSet<&String> = judged.iter().filter(|(_, &g)| g > 0).map(|(d, _)| d).collect();
    if relevant.is_empty() {
        return 0.0;
    }
    let top: BTreeSet<&String> = ranked.iter().take(k).collect();
    relevant.intersection(&top).count() as f64 / relevant.len() as f64
}

fn instance() -> impl Strategy<Value = (Vec<String>, Judgments)> {
    (1usize..=8).prop_flat_map(|n| {
        let docs: Vec<String> = (0..n).map(|i| format!("d{i}")).collect();
        (
            Just(docs.clone()).prop_shuffle(),
            proptest::collection::vec(0u32..=3, n),
            proptest::collection::vec(any::<bool>(), n),
            1usize..=n,
        )
            .prop_map(|(order, grades, judged, depth)| {
                let mut j = BTreeMap::new();
                for (i, (g, is_judged)) in grades.iter().zip(&judged).enumerate() {
                    if *is_judged && j.values().filter(|&&v| v > 0).count() < 3 {
                        j.insert(format!("d{i}"), *g);
                    }
                }
                (order[..depth].to_vec(), j)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn metrics_match_brute_force((ranked, judged) in instance()) {
        prop_assert!((ndcg_at_k(&ranked, &judged, 10) - oracle_ndcg(&ranked, &judged, 10)).abs() < 1e-9);
        prop_assert!((ndcg_at_k(&ranked, &judged, 3) - oracle_ndcg(&ranked, &judged, 3)).abs() < 1e-9);
        prop_assert!((average_precision(&ranked, &judged) - oracle_ap(&ranked, &judged)).abs() < 1e-9);
        prop_assert!((recall_at_k(&ranked, &judged, 100) - oracle_recall(&ranked, &judged, 100)).abs() < 1e-9);
        prop_assert!((recall_at_k(&ranked, &judged, 2) - oracle_recall(&ranked, &judged, 2)).abs() < 1e-9);
        for v in [
            ndcg_at_k(&ranked, &judged, 10),
            average_precision(&ranked, &judged),
            recall_at_k(&ranked, &judged, 100),
        ] {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
        }
    }

    #[test]
    fn ideal_ranking_scores_one((_, judged) in instance()) {
        let mut ideal: Vec<(&String, u32)> = judged.iter().map(|(d, &g)| (d, g)).filter(|(_, g)| *g > 0).collect();
        prop_assume!(!ideal.is_empty());
        ideal.sort_by_key(|e| std::cmp::Reverse(e.1));
        let ranked: Vec<String> = ideal.iter().map(|(d, _)| (*d).clone()).collect();
        prop_assert!((ndcg_at_k(&ranked, &judged, 10) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_sign_under_affine_maps(
        xs in proptest::collection::vec(-10.0f64..10.0, 3..12),
        noise in proptest::collection::vec(-10.0f64..10.0, 12),
        a in prop_oneof![-5.0f64..-0.1, 0.1f64..5.0],
        c in -5.0f64..5.0,
    ) {
        let ys: Vec<f64> = noise[..xs.len()].to_vec();
        let base = pearson(&xs, &ys);
        prop_assume!(base.is_ok());
        let base = base.unwrap();
        let mapped: Vec<f64> = ys.iter().map(|y| a * y + c).collect();
        let r = pearson(&xs, &mapped).unwrap();
        prop_assert!((r - a.signum() * base).abs() < 1e-9);
        prop_assert!((-1.0..=1.0).contains(&r));
    }
}
