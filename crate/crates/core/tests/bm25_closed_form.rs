//! BM25 search against a direct evaluation of the closed-form score.

use std::collections::BTreeMap;

use covex_core::sparse::{bm25_search, build_index, Bm25Params};
use covex_core::text::Analyzer;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

const VOCAB: [&str; 12] = [
    "apple", "bond", "cedar", "delta", "ember", "fjord", "grain", "harbor", "island", "jungle", "kernel", "lemon",
];

fn random_corpus(seed: u64, n: usize) -> Vec<(String, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let len = 1 + (rng.next_u32() % 15) as usize;
            let words: Vec<&str> = (0..len).map(|_| VOCAB[(rng.next_u32() % VOCAB.len() as u32) as usize]).collect();
            (format!("doc{i:02}"), words.join(" "))
        })
        .collect()
}

/// Scores every document directly from whitespace tokens.
fn closed_form(corpus: &[(String, String)], query: &[&str], k1: f64, b: f64) -> BTreeMap<String, f64> {
    let docs: Vec<Vec<&str>> = corpus.iter().map(|(_, t)| t.split_whitespace().collect()).collect();
    let n = docs.len() as f64;
    let avg = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let mut distinct: Vec<&str> = query.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let mut out = BTreeMap::new();
    for (i, d) in docs.iter().enumerate() {
        let mut score = 0.0;
        let mut matched = false;
        for t in &distinct {
            let tf = d.iter().filter(|w| *w == t).count() as f64;
            if tf == 0.0 {
                continue;
            }
            matched = true;
            let df = docs.iter().filter(|x| x.contains(t)).count() as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * d.len() as f64 / avg));
        }
        if matched {
            out.insert(corpus[i].0.clone(), score);
        }
    }
    out
}

#[test]
fn worked_example_is_ln_two() {
    let idx = build_index([("d1", "cat"), ("d2", "dog")], Bm25Params::default(), Analyzer::default()).unwrap();
    let hits = bm25_search(&idx, "cat", 10);
    assert_eq!(hits.len(), 1);
    assert!((hits[0].score - std::f64::consts::LN_2).abs() < 1e-9);
}

#[test]
fn random_corpora_match_closed_form() {
    let raw = Analyzer { stem: false, remove_stopwords: false };
    for seed in 0..20 {
        let corpus = random_corpus(seed, 50);
        for (k1, b) in [(0.9, 0.4), (1.2, 0.75), (0.0, 0.0), (2.0, 1.0)] {
            let params = Bm25Params { k1, b };
            let idx = build_index(corpus.iter().map(|(i, t)| (i.clone(), t.as_str())), params, raw).unwrap();
            for query in [&["apple"][..], &["bond", "cedar", "bond"], &["lemon", "kernel", "fjord", "zebra"]] {
                let want = closed_form(&corpus, query, k1, b);
                let got = bm25_search(&idx, &query.join(" "), 1000);
                assert_eq!(got.len(), want.len());
                for h in &got {
                    assert!((h.score - want[&h.doc_id]).abs() < 1e-9, "seed {seed} {query:?}");
                }
            }
        }
    }
}

#[test]
fn unrelated_document_leaves_ranking_unchanged_when_statistics_fixed() {
    // Same N and lengths; only the vocabulary of the unrelated document differs.
    let raw = Analyzer { stem: false, remove_stopwords: false };
    let base = [("a", "cat dog"), ("b", "cat cat"), ("c", "bird fish")];
    let alt = [("a", "cat dog"), ("b", "cat cat"), ("c", "lion wolf")];
    let x = build_index(base, Bm25Params::default(), raw).unwrap();
    let y = build_index(alt, Bm25Params::default(), raw).unwrap();
    assert_eq!(bm25_search(&x, "cat", 10), bm25_search(&y, "cat", 10));
}
