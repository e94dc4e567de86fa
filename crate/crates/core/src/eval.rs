//! Ranking metrics, topic recall and Pearson correlation.
//!
//! Graded relevance uses gain `2^rel - 1` and discount `log2(i + 1)` for the
//! 1-based rank `i`. A document is relevant when its grade is positive.
//! Aggregates average over queries that have at least one relevant document.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::backend::Embedder;
use crate::corpus::Qrels;
use crate::error::{Error, Result};
use crate::topics::{assign_topic, TopicId, TopicModel};

pub type Judgments = BTreeMap<String, u32>;

fn relevant_count(judgments: &Judgments) -> usize {
    judgments.values().filter(|&&g| g > 0).count()
}

fn gain(grade: u32) -> f64 {
    libm::pow(2.0, f64::from(grade)) - 1.0
}

fn discount(rank: usize) -> f64 {
    libm::log2(rank as f64 + 1.0)
}

pub fn ndcg_at_k<S: AsRef<str>>(ranked: &[S], judgments: &Judgments, k: usize) -> f64 {
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, d)| gain(judgments.get(d.as_ref()).copied().unwrap_or(0)) / discount(i + 1))
        .sum();
    let mut ideal: Vec<u32> = judgments.values().copied().filter(|&g| g > 0).collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| gain(g) / discount(i + 1))
        .sum();
    if idcg > 0.0 {
        dcg / idcg
    } else {
        0.0
    }
}

pub fn recall_at_k<S: AsRef<str>>(ranked: &[S], judgments: &Judgments, k: usize) -> f64 {
    let total = relevant_count(judgments);
    if total == 0 {
        return 0.0;
    }
    let found = ranked
        .iter()
        .take(k)
        .filter(|d| judgments.get(d.as_ref()).is_some_and(|&g| g > 0))
        .count();
    found as f64 / total as f64
}

pub fn average_precision<S: AsRef<str>>(ranked: &[S], judgments: &Judgments) -> f64 {
    let total = relevant_count(judgments);
    if total == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, d) in ranked.iter().enumerate() {
        if judgments.get(d.as_ref()).is_some_and(|&g| g > 0) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    sum / total as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    Map,
    Ndcg(usize),
    Recall(usize),
}

impl Metric {
    pub const STANDARD: [Metric; 3] = [Metric::Map, Metric::Ndcg(10), Metric::Recall(100)];

    pub fn name(self) -> String {
        match self {
            Metric::Map => String::from("map"),
            Metric::Ndcg(k) => format!("ndcg@{k}"),
            Metric::Recall(k) => format!("recall@{k}"),
        }
    }

    pub fn compute<S: AsRef<str>>(self, ranked: &[S], judgments: &Judgments) -> f64 {
        match self {
            Metric::Map => average_precision(ranked, judgments),
            Metric::Ndcg(k) => ndcg_at_k(ranked, judgments, k),
            Metric::Recall(k) => recall_at_k(ranked, judgments, k),
        }
    }
}

impl core::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let cutoff = |rest: &str| -> Result<usize> {
            rest.parse::<usize>()
                .ok()
                .filter(|&k| k > 0)
                .ok_or_else(|| Error::InvalidParameter(format!("bad metric cutoff in {s:?}")))
        };
        if s == "map" {
            Ok(Metric::Map)
        } else if let Some(rest) = s.strip_prefix("ndcg@") {
            Ok(Metric::Ndcg(cutoff(rest)?))
        } else if let Some(rest) = s.strip_prefix("recall@") {
            Ok(Metric::Recall(cutoff(rest)?))
        } else {
            Err(Error::InvalidParameter(format!("unknown metric {s:?}")))
        }
    }
}

/// Ranked documents per query, best first.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Run {
    pub queries: BTreeMap<String, Vec<RunEntry>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub doc_id: String,
    pub score: f64,
}

impl Run {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, query_id: impl Into<String>, entries: Vec<RunEntry>) {
        self.queries.insert(query_id.into(), entries);
    }

    pub fn ranked(&self, query_id: &str) -> Vec<&str> {
        self.queries
            .get(query_id)
            .map(|es| es.iter().map(|e| e.doc_id.as_str()).collect())
            .unwrap_or_default()
    }

    /// Checks unique doc ids and non-increasing scores within every query.
    pub fn validate(&self) -> Result<()> {
        for (q, entries) in &self.queries {
            let mut seen = BTreeSet::new();
            for (i, e) in entries.iter().enumerate() {
                if !seen.insert(e.doc_id.as_str()) {
                    return Err(Error::DuplicateId(format!("{q}/{}", e.doc_id)));
                }
                if i > 0 && e.score > entries[i - 1].score {
                    return Err(Error::InvalidParameter(format!(
                        "scores increase at rank {} of query {q}",
                        i + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub per_query: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metrics: BTreeMap<String, MetricSummary>,
    /// Queries in the qrels without any relevant document.
    pub excluded_queries: Vec<String>,
}

impl MetricReport {
    pub fn mean(&self, metric: Metric) -> Option<f64> {
        self.metrics.get(&metric.name()).map(|m| m.mean)
    }

    pub fn map(&self) -> Option<f64> {
        self.mean(Metric::Map)
    }

    pub fn ndcg_at_10(&self) -> Option<f64> {
        self.mean(Metric::Ndcg(10))
    }

    pub fn recall_at_100(&self) -> Option<f64> {
        self.mean(Metric::Recall(100))
    }
}

/// Scores every qrels query with at least one relevant document. Queries
/// absent from the run count as empty rankings; run queries without qrels are
/// ignored.
pub fn evaluate(run: &Run, qrels: &Qrels, metrics: &[Metric]) -> MetricReport {
    let mut excluded = Vec::new();
    let mut per_metric: BTreeMap<String, BTreeMap<String, f64>> =
        metrics.iter().map(|m| (m.name(), BTreeMap::new())).collect();
    for (q, judgments) in qrels.iter() {
        if relevant_count(judgments) == 0 {
            excluded.push(q.clone());
            continue;
        }
        let ranked = run.ranked(q);
        for m in metrics {
            per_metric
                .get_mut(&m.name())
                .expect("metric registered")
                .insert(q.clone(), m.compute(&ranked, judgments));
        }
    }
    let metrics = per_metric
        .into_iter()
        .map(|(name, per_query)| {
            let mean = if per_query.is_empty() {
                0.0
            } else {
                per_query.values().sum::<f64>() / per_query.len() as f64
            };
            (name, MetricSummary { mean, per_query })
        })
        .collect();
    MetricReport {
        metrics,
        excluded_queries: excluded,
    }
}

/// Sample Pearson correlation coefficient.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidParameter(format!(
            "length mismatch: {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::UndefinedCorrelation("fewer than two points"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance"));
    }
    Ok((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

/// `|assigned ∩ gold| / |gold|`, undefined for an empty gold set.
pub fn set_recall(assigned: &BTreeSet<TopicId>, gold: &BTreeSet<TopicId>) -> Option<f64> {
    if gold.is_empty() {
        return None;
    }
    Some(assigned.intersection(gold).count() as f64 / gold.len() as f64)
}

/// Topics hit by a document's generated queries. Outlier queries contribute
/// nothing.
pub fn query_topics(queries: &[String], model: &TopicModel, embedder: &dyn Embedder) -> Result<BTreeSet<TopicId>> {
    let refs: Vec<&str> = queries.iter().map(String::as_str).collect();
    let mut out = BTreeSet::new();
    if refs.is_empty() {
        return Ok(out);
    }
    for v in embedder.embed_batch(&refs)? {
        if let Some(t) = assign_topic(&v, model)?.topic() {
            out.insert(t);
        }
    }
    Ok(out)
}

pub fn topic_recall(
    gold: &BTreeSet<TopicId>,
    queries: &[String],
    model: &TopicModel,
    embedder: &dyn Embedder,
) -> Result<Option<f64>> {
    if gold.is_empty() {
        return Ok(None);
    }
    Ok(set_recall(&query_topics(queries, model, embedder)?, gold))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocTopicRecall {
    pub doc_id: String,
    pub gold: BTreeSet<TopicId>,
    pub assigned: BTreeSet<TopicId>,
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicRecallReport {
    pub per_doc: Vec<DocTopicRecall>,
    /// Mean over documents with a non-empty gold set.
    pub mean: Option<f64>,
}

impl TopicRecallReport {
    pub fn from_docs(per_doc: Vec<DocTopicRecall>) -> Self {
        let defined: Vec<f64> = per_doc.iter().filter_map(|d| d.recall).collect();
        let mean = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
        Self { per_doc, mean }
    }
}
