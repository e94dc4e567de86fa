//! MMR greedy selection against an exhaustive search over selection
//! sequences.

use covex_core::keywords::mmr_select;
use proptest::prelude::*;

/// A sequence satisfies the recurrence when every element is the best
/// remaining candidate at its step (ties to the lower index).
fn satisfies_recurrence(seq: &[usize], rel: &[f64], sim: &[Vec<f64>], lambda: f64) -> bool {
    for step in 0..seq.len() {
        let chosen = &seq[..step];
        let score = |c: usize| {
            if chosen.is_empty() {
                rel[c]
            } else {
                let red = chosen.iter().map(|&s| sim[c][s]).fold(f64::NEG_INFINITY, f64::max);
                lambda * rel[c] - (1.0 - lambda) * red
            }
        };
        let pick = seq[step];
        for c in 0..rel.len() {
            if c == pick || chosen.contains(&c) {
                continue;
            }
            let (sc, sp) = (score(c), score(pick));
            if sc > sp || (sc == sp && c < pick) {
                return false;
            }
        }
    }
    true
}

fn sequences(n: usize, len: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if prefix.len() == len {
        out.push(prefix.clone());
        return;
    }
    for c in 0..n {
        if !prefix.contains(&c) {
            prefix.push(c);
            sequences(n, len, prefix, out);
            prefix.pop();
        }
    }
}

fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<Vec<f64>>, usize, f64)> {
    (1usize..=8).prop_flat_map(|n| {
        (
            proptest::collection::vec(-1.0f64..1.0, n),
            proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, n), n),
            1usize..=n.min(5),
            prop_oneof![Just(0.0), Just(0.7), Just(1.0), 0.0f64..1.0],
        )
            .prop_map(|(rel, raw, top, lambda)| {
                // Symmetric similarity with unit diagonal.
                let n = rel.len();
                let mut sim = vec![vec![0.0; n]; n];
                for i in 0..n {
                    for j in 0..n {
                        sim[i][j] = if i == j { 1.0 } else { raw[i.min(j)][i.max(j)] };
                    }
                }
                (rel, sim, top, lambda)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn greedy_equals_unique_exhaustive_solution((rel, sim, top, lambda) in instance()) {
        let mut all = Vec::new();
        sequences(rel.len(), top, &mut Vec::new(), &mut all);
        let valid: Vec<&Vec<usize>> = all.iter().filter(|s| satisfies_recurrence(s, &rel, &sim, lambda)).collect();
        prop_assert_eq!(valid.len(), 1);
        let greedy = mmr_select(&rel, |a, b| sim[a][b], top, lambda);
        prop_assert_eq!(&greedy, valid[0]);
    }

    #[test]
    fn lambda_one_is_a_relevance_sort((rel, sim, _, _) in instance()) {
        let greedy = mmr_select(&rel, |a, b| sim[a][b], rel.len(), 1.0);
        let mut sorted: Vec<usize> = (0..rel.len()).collect();
        sorted.sort_by(|&a, &b| rel[b].partial_cmp(&rel[a]).unwrap().then(a.cmp(&b)));
        prop_assert_eq!(greedy, sorted);
    }
}

#[test]
fn hand_built_six_candidate_sequence() {
    let rel = [0.90, 0.88, 0.50, 0.45, 0.30, 0.10];
    let mut sim = vec![vec![0.0; 6]; 6];
    for (i, row) in sim.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let pairs = [(0, 1, 0.95), (2, 3, 0.9), (0, 4, 0.2), (1, 5, 0.1)];
    for &(a, b, s) in &pairs {
        sim[a][b] = s;
        sim[b][a] = s;
    }
    let picks = mmr_select(&rel, |a, b| sim[a][b], 6, 0.7);
    // Step 2: 1 -> 0.7*0.88 - 0.3*0.95 = 0.331; 2 -> 0.35; so 2 beats its near-duplicate peer 1.
    assert_eq!(picks[..2], [0, 2]);
    let mut all = Vec::new();
    sequences(6, 6, &mut Vec::new(), &mut all);
    let valid: Vec<_> = all.iter().filter(|s| satisfies_recurrence(s, &rel, &sim, 0.7)).collect();
    assert_eq!(valid, vec![&picks]);
}
