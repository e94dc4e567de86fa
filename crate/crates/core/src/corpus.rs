//! Corpus records: documents, queries, relevance judgments and expansions.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub title: String,
    pub text: String,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, title: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            doc_id: doc_id.into(),
            title: title.into(),
            text: text.into(),
        }
    }

    /// Indexable body: `title + " " + text` when a title is present and
    /// `include_title` is set, otherwise just the text.
    pub fn body(&self, include_title: bool) -> String {
        let title = self.title.trim();
        if include_title && !title.is_empty() {
            format!("{} {}", title, self.text)
        } else {
            self.text.clone()
        }
    }

    pub fn is_indexable(&self, include_title: bool) -> bool {
        !self.body(include_title).trim().is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: String,
    pub text: String,
}

/// Graded relevance judgments, `query_id -> doc_id -> grade`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Qrels {
    judgments: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one judgment; a repeated (query, document) pair is an error.
    pub fn insert(&mut self, query_id: &str, doc_id: &str, grade: u32) -> Result<()> {
        let per_query = self.judgments.entry(String::from(query_id)).or_default();
        if per_query.contains_key(doc_id) {
            return Err(Error::DuplicateId(format!("({query_id}, {doc_id})")));
        }
        per_query.insert(String::from(doc_id), grade);
        Ok(())
    }

    pub fn get(&self, query_id: &str) -> Option<&BTreeMap<String, u32>> {
        self.judgments.get(query_id)
    }

    pub fn grade(&self, query_id: &str, doc_id: &str) -> u32 {
        self.get(query_id)
            .and_then(|m| m.get(doc_id))
            .copied()
            .unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &BTreeMap<String, u32>)> {
        self.judgments.iter()
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &String> {
        self.judgments.keys()
    }

    pub fn len(&self) -> usize {
        self.judgments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }
}

/// Generated queries attached to one document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpandedDocument {
    pub doc_id: String,
    pub queries: Vec<String>,
}

impl ExpandedDocument {
    /// A persisted expansion must carry at least one non-blank query.
    pub fn validate(&self) -> Result<()> {
        if self.queries.is_empty() {
            return Err(Error::MissingQueries(self.doc_id.clone()));
        }
        if let Some(i) = self.queries.iter().position(|q| q.trim().is_empty()) {
            return Err(Error::InvalidParameter(format!(
                "document {} has a blank query at position {i}",
                self.doc_id
            )));
        }
        Ok(())
    }

    /// Copy keeping only the first `m` queries.
    pub fn truncated(&self, m: usize) -> Self {
        Self {
            doc_id: self.doc_id.clone(),
            queries: self.queries.iter().take(m).cloned().collect(),
        }
    }
}

/// Checks that ids are unique; returns the first duplicate otherwise.
pub fn ensure_unique_ids<'a>(ids: impl IntoIterator<Item = &'a str>) -> Result<()> {
    let mut seen = alloc::collections::BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::DuplicateId(String::from(id)));
        }
    }
    Ok(())
}
