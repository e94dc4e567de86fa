//! BM25 over an in-memory inverted index.
//!
//! ```text
//! score(d) = sum over distinct query terms t in d of
//!            idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len_d / avg_len))
//! idf(t)   = ln(1 + (N - df + 0.5) / (df + 0.5))
//! ```

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, ExpandedDocument};
use crate::error::{Error, Result};
use crate::text::Analyzer;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 0.9, b: 0.4 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if self.k1.is_nan() || self.k1 < 0.0 || !(0.0..=1.0).contains(&self.b) {
            return Err(Error::InvalidParameter(alloc::format!(
                "bm25 requires k1 >= 0 and b in [0, 1], got k1={} b={}",
                self.k1,
                self.b
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredHit {
    pub doc_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvertedIndex {
    pub postings: BTreeMap<String, Vec<Posting>>,
    pub doc_lengths: Vec<u32>,
    pub avg_doc_length: f64,
    pub doc_ids: Vec<String>,
    pub analyzer: Analyzer,
    pub params: Bm25Params,
}

impl InvertedIndex {
    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn document_frequency(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn idf(&self, term: &str) -> f64 {
        bm25_idf(self.doc_count(), self.document_frequency(term))
    }
}

pub fn bm25_idf(n: usize, df: usize) -> f64 {
    let (n, df) = (n as f64, df as f64);
    libm::log(1.0 + (n - df + 0.5) / (df + 0.5))
}

/// Per-term contribution given its idf.
pub fn bm25_term_score(idf: f64, tf: f64, doc_len: f64, avg_len: f64, params: Bm25Params) -> f64 {
    let norm = if avg_len > 0.0 {
        1.0 - params.b + params.b * doc_len / avg_len
    } else {
        1.0
    };
    idf * tf * (params.k1 + 1.0) / (tf + params.k1 * norm)
}

/// Document text with its generated queries appended, one per line.
pub fn expand_text(doc: &Document, expansion: &ExpandedDocument, include_title: bool) -> Result<String> {
    if doc.doc_id != expansion.doc_id {
        return Err(Error::DocIdMismatch {
            expected: doc.doc_id.clone(),
            actual: expansion.doc_id.clone(),
        });
    }
    let mut out = doc.body(include_title);
    for q in &expansion.queries {
        out.push('\n');
        out.push_str(q);
    }
    Ok(out)
}

pub fn build_index<I, S, T>(texts: I, params: Bm25Params, analyzer: Analyzer) -> Result<InvertedIndex>
where
    I: IntoIterator<Item = (S, T)>,
    S: Into<String>,
    T: AsRef<str>,
{
    params.validate()?;
    let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
    let mut doc_lengths = Vec::new();
    let mut doc_ids = Vec::new();
    for (ordinal, (id, text)) in texts.into_iter().enumerate() {
        let ordinal = u32::try_from(ordinal)
            .map_err(|_| Error::InvalidParameter("too many documents".into()))?;
        let mut counts: BTreeMap<String, u32> = BTreeMap::new();
        let terms = analyzer.analyze(text.as_ref());
        doc_lengths.push(terms.len() as u32);
        for t in terms {
            *counts.entry(t).or_default() += 1;
        }
        for (term, tf) in counts {
            postings.entry(term).or_default().push(Posting { doc: ordinal, tf });
        }
        doc_ids.push(id.into());
    }
    if doc_ids.is_empty() {
        return Err(Error::EmptyCollection("documents"));
    }
    crate::corpus::ensure_unique_ids(doc_ids.iter().map(String::as_str))?;
    let avg_doc_length =
        doc_lengths.iter().map(|&l| f64::from(l)).sum::<f64>() / doc_lengths.len() as f64;
    Ok(InvertedIndex {
        postings,
        doc_lengths,
        avg_doc_length,
        doc_ids,
        analyzer,
        params,
    })
}

/// Descending score order with ties broken by ascending id.
pub(crate) fn rank_order(a: (&str, f64), b: (&str, f64)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.0.cmp(b.0))
}

/// Keeps the best `k` of `hits` under [`rank_order`].
pub(crate) fn top_k<T>(mut hits: Vec<T>, k: usize, key: impl Fn(&T) -> (&str, f64)) -> Vec<T> {
    let cmp = |a: &T, b: &T| rank_order(key(a), key(b));
    if hits.len() > k {
        if k == 0 {
            return Vec::new();
        }
        hits.select_nth_unstable_by(k - 1, cmp);
        hits.truncate(k);
    }
    hits.sort_by(cmp);
    hits
}

pub fn bm25_search(index: &InvertedIndex, query: &str, k: usize) -> Vec<ScoredHit> {
    let terms: BTreeSet<String> = index.analyzer.analyze(query).into_iter().collect();
    let mut scores: BTreeMap<u32, f64> = BTreeMap::new();
    for term in &terms {
        let Some(list) = index.postings.get(term) else {
            continue;
        };
        let idf = bm25_idf(index.doc_count(), list.len());
        for p in list {
            let len = f64::from(index.doc_lengths[p.doc as usize]);
            *scores.entry(p.doc).or_default() +=
                bm25_term_score(idf, f64::from(p.tf), len, index.avg_doc_length, index.params);
        }
    }
    let hits: Vec<ScoredHit> = scores
        .into_iter()
        .map(|(d, score)| ScoredHit {
            doc_id: index.doc_ids[d as usize].clone(),
            score,
        })
        .collect();
    top_k(hits, k, |h| (h.doc_id.as_str(), h.score))
}
