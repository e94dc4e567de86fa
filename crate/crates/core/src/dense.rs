//! Exact dense retrieval over two indices: one vector per document and one
//! per generated query, each query linked back to its source document.
//!
//! Fused scoring for a query vector `v`:
//!
//! ```text
//! D_t  = top n_t documents by sim(v, v_d)
//! H_q  = top n_q generated queries by sim(v, u_j)
//! S_t  = sim(v, v_d) if d in D_t else 0
//! S_q  = max sim(v, u_j) over j in H_q with doc(j) = d, else 0
//! S    = (1 - alpha) * S_t + alpha * S_q
//! ```

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::backend::Embedder;
use crate::corpus::{Document, ExpandedDocument};
use crate::error::{Error, Result};
use crate::sparse::{top_k, ScoredHit};
use crate::vector::{cosine, dot, Embedding};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Similarity {
    #[default]
    InnerProduct,
    Cosine,
}

impl Similarity {
    pub fn score(self, a: &[f32], b: &[f32]) -> f64 {
        match self {
            Similarity::InnerProduct => dot(a, b),
            Similarity::Cosine => cosine(a, b),
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            Similarity::InnerProduct => 0,
            Similarity::Cosine => 1,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Similarity::InnerProduct),
            1 => Some(Similarity::Cosine),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionParams {
    pub alpha: f64,
    pub n_t: usize,
    pub n_q: usize,
    pub similarity: Similarity,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            n_t: 300,
            n_q: 1000,
            similarity: Similarity::InnerProduct,
        }
    }
}

impl FusionParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidParameter(alloc::format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if self.n_t == 0 || self.n_q == 0 {
            return Err(Error::InvalidParameter("n_t and n_q must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedHit {
    pub doc_id: String,
    pub s_t: f64,
    pub s_q: f64,
    pub s: f64,
}

fn flatten(dimension: usize, vectors: Vec<Embedding>) -> Result<Vec<f32>> {
    let mut flat = Vec::with_capacity(dimension * vectors.len());
    for v in vectors {
        if v.dimension() != dimension {
            return Err(Error::DimensionMismatch {
                expected: dimension,
                actual: v.dimension(),
            });
        }
        flat.extend_from_slice(v.values());
    }
    Ok(flat)
}

/// One vector per document, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TextIndex {
    dimension: usize,
    doc_ids: Vec<String>,
    vectors: Vec<f32>,
}

impl TextIndex {
    pub fn new(dimension: usize, doc_ids: Vec<String>, vectors: Vec<Embedding>) -> Result<Self> {
        if doc_ids.len() != vectors.len() {
            return Err(Error::InvalidParameter("one vector per document required".into()));
        }
        crate::corpus::ensure_unique_ids(doc_ids.iter().map(String::as_str))?;
        Ok(Self {
            dimension,
            doc_ids,
            vectors: flatten(dimension, vectors)?,
        })
    }

    /// Rebuilds an index from its flat parts (snapshot loading).
    pub fn from_raw(dimension: usize, doc_ids: Vec<String>, vectors: Vec<f32>) -> Result<Self> {
        if dimension == 0 || vectors.len() != dimension * doc_ids.len() {
            return Err(Error::InvalidParameter("vector table size mismatch".into()));
        }
        Ok(Self {
            dimension,
            doc_ids,
            vectors,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dimension..(i + 1) * self.dimension]
    }

    pub fn raw_vectors(&self) -> &[f32] {
        &self.vectors
    }
}

/// One vector per generated query; `owners[j]` is the ordinal of the source
/// document in `doc_ids`.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryIndex {
    dimension: usize,
    doc_ids: Vec<String>,
    owners: Vec<u32>,
    vectors: Vec<f32>,
}

impl QueryIndex {
    pub fn from_raw(dimension: usize, doc_ids: Vec<String>, owners: Vec<u32>, vectors: Vec<f32>) -> Result<Self> {
        if dimension == 0 || vectors.len() != dimension * owners.len() {
            return Err(Error::InvalidParameter("vector table size mismatch".into()));
        }
        if owners.iter().any(|&o| o as usize >= doc_ids.len()) {
            return Err(Error::InvalidParameter("query back-pointer out of range".into()));
        }
        Ok(Self {
            dimension,
            doc_ids,
            owners,
            vectors,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.owners.len()
    }

    pub fn is_empty(&self) -> bool {
        self.owners.is_empty()
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn owners(&self) -> &[u32] {
        &self.owners
    }

    /// Source document of query entry `j`.
    pub fn doc_of(&self, j: usize) -> &str {
        &self.doc_ids[self.owners[j] as usize]
    }

    pub fn vector(&self, j: usize) -> &[f32] {
        &self.vectors[j * self.dimension..(j + 1) * self.dimension]
    }

    pub fn raw_vectors(&self) -> &[f32] {
        &self.vectors
    }
}

fn embed_all(embedder: &dyn Embedder, texts: &[String], batch_size: usize) -> Result<Vec<Embedding>> {
    let mut out = Vec::with_capacity(texts.len());
    for chunk in texts.chunks(batch_size.max(1)) {
        let refs: Vec<&str> = chunk.iter().map(String::as_str).collect();
        let vectors = embedder.embed_batch(&refs)?;
        crate::backend::check_dimensions(embedder.dimension(), &vectors)?;
        out.extend(vectors);
    }
    Ok(out)
}

/// Embeds `(doc_id, text)` pairs in order. Used for the text index and for
/// the append index built from expanded texts.
pub fn build_index_from_texts(
    texts: Vec<(String, String)>,
    embedder: &dyn Embedder,
    batch_size: usize,
) -> Result<TextIndex> {
    if texts.is_empty() {
        return Err(Error::EmptyCollection("documents"));
    }
    let (ids, bodies): (Vec<String>, Vec<String>) = texts.into_iter().unzip();
    let vectors = embed_all(embedder, &bodies, batch_size)?;
    TextIndex::new(embedder.dimension(), ids, vectors)
}

pub fn build_text_index(
    docs: &[Document],
    include_title: bool,
    embedder: &dyn Embedder,
    batch_size: usize,
) -> Result<TextIndex> {
    build_index_from_texts(
        docs.iter()
            .map(|d| (d.doc_id.clone(), d.body(include_title)))
            .collect(),
        embedder,
        batch_size,
    )
}

/// Embeds every generated query; global ids run in (document, query) order.
pub fn build_query_index(
    expansions: &[ExpandedDocument],
    embedder: &dyn Embedder,
    batch_size: usize,
) -> Result<QueryIndex> {
    if expansions.is_empty() {
        return Err(Error::EmptyCollection("expansions"));
    }
    let mut doc_ids = Vec::with_capacity(expansions.len());
    let mut owners = Vec::new();
    let mut texts = Vec::new();
    for (ordinal, e) in expansions.iter().enumerate() {
        e.validate()?;
        doc_ids.push(e.doc_id.clone());
        for q in &e.queries {
            owners.push(ordinal as u32);
            texts.push(q.clone());
        }
    }
    crate::corpus::ensure_unique_ids(doc_ids.iter().map(String::as_str))?;
    let vectors = embed_all(embedder, &texts, batch_size)?;
    let dimension = embedder.dimension();
    QueryIndex::from_raw(dimension, doc_ids, owners, flatten(dimension, vectors)?)
}

fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}

/// Indices of the best `n` scores, descending, ties broken by `tie`.
fn top_indices(scores: &[f64], n: usize, tie: impl Fn(usize, usize) -> Ordering) -> Vec<usize> {
    let cmp = |&a: &usize, &b: &usize| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then_with(|| tie(a, b))
    };
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    if n < idx.len() {
        if n == 0 {
            return Vec::new();
        }
        idx.select_nth_unstable_by(n - 1, cmp);
        idx.truncate(n);
    }
    idx.sort_by(cmp);
    idx
}

/// Plain top-`k` nearest documents.
pub fn search_text(v: &Embedding, index: &TextIndex, similarity: Similarity, k: usize) -> Result<Vec<ScoredHit>> {
    check_dim(index.dimension, v.dimension())?;
    let hits = (0..index.len())
        .map(|i| ScoredHit {
            doc_id: index.doc_ids[i].clone(),
            score: similarity.score(v.values(), index.vector(i)),
        })
        .collect();
    Ok(top_k(hits, k, |h| (h.doc_id.as_str(), h.score)))
}

/// Nearest documents in an index built from expanded texts.
pub fn search_append(v: &Embedding, index: &TextIndex, similarity: Similarity, k: usize) -> Result<Vec<ScoredHit>> {
    search_text(v, index, similarity, k)
}

pub fn search_fused(
    v: &Embedding,
    text_index: &TextIndex,
    query_index: &QueryIndex,
    params: &FusionParams,
    k: usize,
) -> Result<Vec<FusedHit>> {
    params.validate()?;
    check_dim(text_index.dimension, v.dimension())?;
    check_dim(query_index.dimension, v.dimension())?;
    let sim = params.similarity;

    let text_scores: Vec<f64> = (0..text_index.len())
        .map(|i| sim.score(v.values(), text_index.vector(i)))
        .collect();
    let d_t = top_indices(&text_scores, params.n_t, |a, b| {
        text_index.doc_ids[a].cmp(&text_index.doc_ids[b])
    });

    let query_scores: Vec<f64> = (0..query_index.len())
        .map(|j| sim.score(v.values(), query_index.vector(j)))
        .collect();
    let h_q = top_indices(&query_scores, params.n_q, |a, b| a.cmp(&b));

    let mut candidates: alloc::collections::BTreeMap<&str, (f64, Option<f64>)> =
        alloc::collections::BTreeMap::new();
    for &i in &d_t {
        candidates.insert(&text_index.doc_ids[i], (text_scores[i], None));
    }
    for &j in &h_q {
        let entry = candidates.entry(query_index.doc_of(j)).or_insert((0.0, None));
        let s = query_scores[j];
        entry.1 = Some(entry.1.map_or(s, |m: f64| m.max(s)));
    }

    let alpha = params.alpha;
    let hits: Vec<FusedHit> = candidates
        .into_iter()
        .map(|(doc_id, (s_t, s_q))| {
            let s_q = s_q.unwrap_or(0.0);
            FusedHit {
                doc_id: String::from(doc_id),
                s_t,
                s_q,
                s: (1.0 - alpha) * s_t + alpha * s_q,
            }
        })
        .collect();
    Ok(top_k(hits, k, |h| (h.doc_id.as_str(), h.s)))
}
