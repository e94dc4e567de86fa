//! Corpus-level topic model over sentence embeddings.
//!
//! Topics are numbered from 1. A sentence is assigned to the topic whose
//! centroid is nearest in L2, unless that distance exceeds the topic's
//! outlier threshold. A document's topic set is the union of its sentences'
//! non-outlier assignments.

mod cluster;
mod ctfidf;
mod naming;

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::backend::ChatModel;
use crate::error::{Error, Result};
use crate::vector::{self, Embedding};

pub use cluster::{fit, ClusterConfig, Clustering};
pub use ctfidf::{compute_ctfidf, ctfidf_from_counts, pseudo_document_counts, CtfidfTable, WeightedTerm};
pub use naming::{
    build_naming_prompt, default_naming_exemplars, fallback_name, parse_topic_name, refine_topic_name,
    NamingExemplar, NAMING_INSTRUCTION,
};

/// 1-based topic identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TopicId(pub u32);

impl TopicId {
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }
    pub fn from_index(i: usize) -> Self {
        Self(i as u32 + 1)
    }
}

impl fmt::Display for TopicId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assignment {
    Topic(TopicId),
    Outlier,
}

impl Assignment {
    pub fn topic(self) -> Option<TopicId> {
        match self {
            Assignment::Topic(t) => Some(t),
            Assignment::Outlier => None,
        }
    }
}

/// Identifies a sentence: document id plus position within the document.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SentenceRef {
    pub doc_id: String,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub dimension: usize,
    pub centroids: Vec<Vec<f32>>,
    pub outlier_thresholds: Vec<f64>,
    pub keywords: Vec<Vec<WeightedTerm>>,
    pub representative_sentences: Vec<Vec<String>>,
    pub names: Vec<String>,
}

impl TopicModel {
    /// A model with centroids and thresholds only; keywords, representative
    /// sentences and names start empty.
    pub fn from_clustering(clustering: &Clustering, dimension: usize) -> Self {
        let c = clustering.k();
        Self {
            dimension,
            centroids: clustering.centroids.clone(),
            outlier_thresholds: clustering.outlier_thresholds.clone(),
            keywords: alloc::vec![Vec::new(); c],
            representative_sentences: alloc::vec![Vec::new(); c],
            names: alloc::vec![String::new(); c],
        }
    }

    pub fn topic_count(&self) -> usize {
        self.centroids.len()
    }

    pub fn topic_ids(&self) -> impl Iterator<Item = TopicId> {
        (0..self.topic_count()).map(TopicId::from_index)
    }

    fn check(&self, topic: TopicId) -> Result<usize> {
        if topic.0 == 0 || topic.index() >= self.topic_count() {
            Err(Error::UnknownTopic(topic.0))
        } else {
            Ok(topic.index())
        }
    }

    pub fn centroid(&self, topic: TopicId) -> Result<&[f32]> {
        Ok(&self.centroids[self.check(topic)?])
    }

    pub fn name(&self, topic: TopicId) -> Result<&str> {
        Ok(&self.names[self.check(topic)?])
    }

    pub fn keyword_terms(&self, topic: TopicId) -> Result<impl Iterator<Item = &str>> {
        Ok(self.keywords[self.check(topic)?].iter().map(|w| w.term.as_str()))
    }

    /// Nearest centroid under L2 (ties toward the lower id), or
    /// [`Assignment::Outlier`] when farther than that topic's threshold.
    pub fn assign(&self, z: &[f32]) -> Result<Assignment> {
        if z.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                actual: z.len(),
            });
        }
        let mut best: Option<(usize, f64)> = None;
        for (j, c) in self.centroids.iter().enumerate() {
            let d = vector::l2(z, c);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((j, d));
            }
        }
        Ok(match best {
            Some((j, d)) if d <= self.outlier_thresholds[j] => Assignment::Topic(TopicId::from_index(j)),
            _ => Assignment::Outlier,
        })
    }
}

pub fn assign_topic(z: &Embedding, model: &TopicModel) -> Result<Assignment> {
    model.assign(z.values())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentTopics {
    pub doc_id: String,
    pub topic_ids: BTreeSet<TopicId>,
}

/// Union of the non-outlier assignments of a document's sentences.
pub fn document_topics(
    doc_id: &str,
    sentence_embeddings: &[Embedding],
    model: &TopicModel,
) -> Result<DocumentTopics> {
    let mut topic_ids = BTreeSet::new();
    for z in sentence_embeddings {
        if let Assignment::Topic(t) = assign_topic(z, model)? {
            topic_ids.insert(t);
        }
    }
    Ok(DocumentTopics {
        doc_id: String::from(doc_id),
        topic_ids,
    })
}

/// Indices into `members` of the (at most) `l` sentences nearest the
/// centroid, ascending by distance, ties by sentence reference.
pub fn representative_sentences(
    centroid: &[f32],
    members: &[(SentenceRef, &[f32])],
    l: usize,
) -> Result<Vec<usize>> {
    let mut scored: Vec<(f64, usize)> = Vec::with_capacity(members.len());
    for (i, (_, z)) in members.iter().enumerate() {
        if z.len() != centroid.len() {
            return Err(Error::DimensionMismatch {
                expected: centroid.len(),
                actual: z.len(),
            });
        }
        scored.push((vector::l2(z, centroid), i));
    }
    scored.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(Ordering::Equal)
            .then_with(|| members[a.1].0.cmp(&members[b.1].0))
    });
    Ok(scored.into_iter().take(l).map(|(_, i)| i).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TopicConfig {
    #[serde(flatten)]
    pub cluster: ClusterConfig,
    /// Keywords kept per topic (M).
    pub keywords_per_topic: usize,
    /// Representative sentences per topic (L).
    pub representatives: usize,
    /// Extra naming attempts when the completion lacks the `topic: ` prefix.
    pub name_retries: u32,
    pub temperature: f64,
}

impl Default for TopicConfig {
    fn default() -> Self {
        Self {
            cluster: ClusterConfig::default(),
            keywords_per_topic: 10,
            representatives: 3,
            name_retries: 2,
            temperature: 0.8,
        }
    }
}

impl TopicConfig {
    pub fn validate(&self) -> Result<()> {
        let c = &self.cluster;
        if c.min_cluster_size == 0 || c.max_k < 2 || c.max_iter == 0 || c.restarts == 0 || c.silhouette_sample < 2 {
            return Err(Error::InvalidParameter(
                "topics need min_cluster_size >= 1, max_k >= 2, max_iter >= 1, restarts >= 1, silhouette_sample >= 2".into(),
            ));
        }
        if self.keywords_per_topic == 0 || self.representatives == 0 {
            return Err(Error::InvalidParameter(
                "keywords_per_topic and representatives must be positive".into(),
            ));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(Error::InvalidParameter("temperature must be non-negative".into()));
        }
        Ok(())
    }
}

/// One sentence fed to [`fit_topic_model`].
#[derive(Debug, Clone)]
pub struct SentenceInput<'a> {
    pub reference: SentenceRef,
    pub text: &'a str,
    pub embedding: Embedding,
}

#[derive(Debug, Clone)]
pub struct FittedTopics {
    pub model: TopicModel,
    pub ctfidf: CtfidfTable,
    /// Cluster membership of every input sentence, as fitted.
    pub labels: Vec<TopicId>,
    pub silhouette: Option<f64>,
}

/// Clusters the sentences, then fills in c-TF-IDF keywords, representative
/// sentences and LLM-refined names for every topic.
pub fn fit_topic_model(
    sentences: &[SentenceInput<'_>],
    config: &TopicConfig,
    chat: &dyn ChatModel,
    exemplars: &[NamingExemplar],
) -> Result<FittedTopics> {
    let embeddings: Vec<Embedding> = sentences.iter().map(|s| s.embedding.clone()).collect();
    let clustering = fit(&embeddings, &config.cluster)?;
    let dimension = embeddings.first().map_or(0, Embedding::dimension);
    let mut model = TopicModel::from_clustering(&clustering, dimension);
    let c = model.topic_count();

    let mut members: Vec<Vec<usize>> = alloc::vec![Vec::new(); c];
    for (i, &l) in clustering.labels.iter().enumerate() {
        members[l].push(i);
    }
    let by_topic: Vec<Vec<&str>> = members
        .iter()
        .map(|m| m.iter().map(|&i| sentences[i].text).collect())
        .collect();
    let table = compute_ctfidf(&by_topic)?;

    for j in 0..c {
        model.keywords[j] = table.top_terms(j, config.keywords_per_topic);
        let refs: Vec<(SentenceRef, &[f32])> = members[j]
            .iter()
            .map(|&i| (sentences[i].reference.clone(), sentences[i].embedding.values()))
            .collect();
        let reps = representative_sentences(&model.centroids[j], &refs, config.representatives)?;
        model.representative_sentences[j] = reps
            .into_iter()
            .map(|r| String::from(sentences[members[j][r]].text))
            .collect();
    }
    for j in 0..c {
        let keywords: Vec<&str> = model.keywords[j].iter().map(|w| w.term.as_str()).collect();
        model.names[j] = refine_topic_name(
            chat,
            exemplars,
            &model.representative_sentences[j],
            &keywords,
            config.name_retries,
            config.temperature,
        )?;
    }
    Ok(FittedTopics {
        model,
        ctfidf: table,
        labels: clustering.labels.iter().map(|&l| TopicId::from_index(l)).collect(),
        silhouette: clustering.silhouette,
    })
}
