//! Class-based TF-IDF over per-topic pseudo-documents.
//!
//! All member sentences of a topic are concatenated into one pseudo-document.
//! With `tf(t, j)` the count of term `t` in pseudo-document `j`, `f(t)` its
//! total count over all pseudo-documents and `A` the mean pseudo-document
//! length in tokens:
//!
//! ```text
//! weight(t, j) = tf(t, j) * ln(1 + A / f(t))
//! ```

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::Analyzer;

/// Per-topic term weights over a shared vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtfidfTable {
    /// Sorted vocabulary.
    pub vocabulary: Vec<String>,
    /// `weights[topic][term]`, topics 0-based in the order given.
    pub weights: Vec<Vec<f64>>,
    /// Mean pseudo-document length `A`.
    pub mean_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedTerm {
    pub term: String,
    pub weight: f64,
}

impl CtfidfTable {
    pub fn weight(&self, topic: usize, term: &str) -> f64 {
        match self.vocabulary.binary_search_by(|t| t.as_str().cmp(term)) {
            Ok(i) => self.weights[topic][i],
            Err(_) => 0.0,
        }
    }

    pub fn topic_count(&self) -> usize {
        self.weights.len()
    }

    /// The `m` highest-weighted terms of `topic`, weight descending, ties by
    /// term. Terms absent from the topic (weight 0) are never returned.
    pub fn top_terms(&self, topic: usize, m: usize) -> Vec<WeightedTerm> {
        let row = &self.weights[topic];
        let mut idx: Vec<usize> = (0..row.len()).filter(|&i| row[i] > 0.0).collect();
        idx.sort_by(|&a, &b| {
            row[b]
                .partial_cmp(&row[a])
                .unwrap_or(Ordering::Equal)
                .then_with(|| self.vocabulary[a].cmp(&self.vocabulary[b]))
        });
        idx.into_iter()
            .take(m)
            .map(|i| WeightedTerm {
                term: self.vocabulary[i].clone(),
                weight: row[i],
            })
            .collect()
    }
}

/// Builds the table from raw per-topic term counts.
pub fn ctfidf_from_counts(counts: &[BTreeMap<String, u64>]) -> Result<CtfidfTable> {
    if counts.is_empty() {
        return Err(Error::EmptyCollection("topics"));
    }
    let mut totals: BTreeMap<&str, u64> = BTreeMap::new();
    let mut tokens = 0u64;
    for per_topic in counts {
        for (term, &c) in per_topic {
            if c > 0 {
                *totals.entry(term.as_str()).or_default() += c;
                tokens += c;
            }
        }
    }
    if totals.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    let mean_length = tokens as f64 / counts.len() as f64;
    let vocabulary: Vec<String> = totals.keys().map(|t| String::from(*t)).collect();
    let idf: Vec<f64> = totals
        .values()
        .map(|&f| libm::log(1.0 + mean_length / f as f64))
        .collect();

    let mut weights = vec![vec![0.0; vocabulary.len()]; counts.len()];
    for (j, per_topic) in counts.iter().enumerate() {
        for (term, &tf) in per_topic {
            if tf == 0 {
                continue;
            }
            if let Ok(i) = vocabulary.binary_search(term) {
                weights[j][i] = tf as f64 * idf[i];
            }
        }
    }
    Ok(CtfidfTable {
        vocabulary,
        weights,
        mean_length,
    })
}

/// Term counts of each topic's pseudo-document: lowercased unigrams with
/// stop-words removed, no stemming.
pub fn pseudo_document_counts(sentences_by_topic: &[Vec<&str>]) -> Result<Vec<BTreeMap<String, u64>>> {
    let analyzer = Analyzer::unstemmed();
    sentences_by_topic
        .iter()
        .enumerate()
        .map(|(j, sentences)| {
            if sentences.is_empty() {
                return Err(Error::EmptyTopic(j as u32 + 1));
            }
            let mut counts = BTreeMap::new();
            for s in sentences {
                for term in analyzer.analyze(s) {
                    *counts.entry(term).or_default() += 1;
                }
            }
            Ok(counts)
        })
        .collect()
}

pub fn compute_ctfidf(sentences_by_topic: &[Vec<&str>]) -> Result<CtfidfTable> {
    ctfidf_from_counts(&pseudo_document_counts(sentences_by_topic)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn counts(rows: &[&[(&str, u64)]]) -> Vec<BTreeMap<String, u64>> {
        rows.iter()
            .map(|r| r.iter().map(|(t, c)| (String::from(*t), *c)).collect())
            .collect()
    }

    #[test]
    fn worked_two_topic_example() {
        // A = (3 + 7 + 10) / 2 = 10; alpha only in topic 1, f = 3.
        let table = ctfidf_from_counts(&counts(&[
            &[("alpha", 3), ("beta", 7)],
            &[("gamma", 10)],
        ]))
        .unwrap();
        assert_eq!(table.mean_length, 10.0);
        let expected = 3.0 * libm::log(1.0 + 10.0 / 3.0);
        assert!((table.weight(0, "alpha") - expected).abs() < 1e-9);
        assert_eq!(table.weight(1, "alpha"), 0.0);
    }

    #[test]
    fn equally_distributed_term_has_equal_weights() {
        let table = ctfidf_from_counts(&counts(&[
            &[("market", 2), ("stock", 5)],
            &[("market", 2), ("bond", 1)],
            &[("market", 2), ("loan", 9)],
        ]))
        .unwrap();
        let w = table.weight(0, "market");
        assert!(w > 0.0);
        assert_eq!(w, table.weight(1, "market"));
        assert_eq!(w, table.weight(2, "market"));
    }

    #[test]
    fn single_topic_ranks_by_frequency() {
        let table = compute_ctfidf(&[alloc::vec![
            "stock price stock buy",
            "stock price sell stock",
        ]])
        .unwrap();
        let terms: Vec<_> = table.top_terms(0, 10).into_iter().map(|t| t.term).collect();
        assert_eq!(terms, ["stock", "price", "buy", "sell"]);
    }

    #[test]
    fn empty_vocabulary_is_an_error() {
        assert!(matches!(
            compute_ctfidf(&[alloc::vec!["the of a"]]),
            Err(Error::EmptyVocabulary)
        ));
        assert!(matches!(compute_ctfidf(&[alloc::vec![]]), Err(Error::EmptyTopic(1))));
    }

    #[test]
    fn top_terms_break_ties_lexicographically() {
        let table = ctfidf_from_counts(&counts(&[&[("zeta", 1), ("eta", 1), ("beta", 1)]])).unwrap();
        let terms: Vec<_> = table.top_terms(0, 2).into_iter().map(|t| t.term).collect();
        assert_eq!(terms, ["beta", "eta"]);
    }

    proptest! {
        #[test]
        fn ordering_invariant_under_common_scaling(
            rows in proptest::collection::vec(proptest::collection::btree_map("[a-f]", 1u64..20, 1..6), 1..4),
            scale in 2u64..7,
        ) {
            let scaled: Vec<BTreeMap<String, u64>> = rows
                .iter()
                .map(|r| r.iter().map(|(t, c)| (t.clone(), c * scale)).collect())
                .collect();
            let a = ctfidf_from_counts(&rows).unwrap();
            let b = ctfidf_from_counts(&scaled).unwrap();
            for j in 0..rows.len() {
                let ta: Vec<_> = a.top_terms(j, usize::MAX).into_iter().map(|t| t.term).collect();
                let tb: Vec<_> = b.top_terms(j, usize::MAX).into_iter().map(|t| t.term).collect();
                prop_assert_eq!(ta, tb);
            }
        }
    }
}
