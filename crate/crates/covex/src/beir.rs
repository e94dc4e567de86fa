//! BEIR-layout datasets and the expanded-corpus file.
//!
//! A dataset directory holds `corpus.jsonl` (`_id`, `title`, `text`),
//! `queries.jsonl` (`_id`, `text`) and `qrels/<split>.tsv` (tab-separated,
//! one header row, columns query-id, corpus-id, score).

use std::path::{Path, PathBuf};

use covex_core::corpus::{ensure_unique_ids, Document, ExpandedDocument, Qrels, QueryRecord};
use covex_core::qgen::GenerationRecord;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio;

#[derive(Debug, Deserialize)]
struct CorpusLine {
    #[serde(rename = "_id")]
    id: String,
    #[serde(default)]
    title: String,
    #[serde(default)]
    text: String,
}

#[derive(Debug, Deserialize)]
struct QueryLine {
    #[serde(rename = "_id")]
    id: String,
    text: String,
}

fn check_unique(path: &Path, ids: impl IntoIterator<Item = impl AsRef<str>>) -> Result<()> {
    let owned: Vec<String> = ids.into_iter().map(|s| s.as_ref().to_owned()).collect();
    ensure_unique_ids(owned.iter().map(String::as_str))
        .map_err(|e| Error::format(path, e))
}

/// Documents in file order. Documents with an empty body are skipped with a
/// warning; ids must still be unique across the whole file.
pub fn load_corpus(path: &Path) -> Result<Vec<Document>> {
    let lines: Vec<CorpusLine> = fsio::read_jsonl(path)?;
    check_unique(path, lines.iter().map(|l| &l.id))?;
    let mut docs = Vec::with_capacity(lines.len());
    for l in lines {
        if l.id.is_empty() {
            return Err(Error::format(path, "empty _id"));
        }
        let doc = Document::new(l.id, l.title, l.text);
        if doc.is_indexable(true) {
            docs.push(doc);
        } else {
            log::warn!("{}: skipping document {} with empty body", path.display(), doc.doc_id);
        }
    }
    Ok(docs)
}

pub fn load_queries(path: &Path) -> Result<Vec<QueryRecord>> {
    let lines: Vec<QueryLine> = fsio::read_jsonl(path)?;
    check_unique(path, lines.iter().map(|l| &l.id))?;
    lines
        .into_iter()
        .map(|l| {
            if l.text.trim().is_empty() {
                Err(Error::format(path, format!("query {} has empty text", l.id)))
            } else {
                Ok(QueryRecord {
                    query_id: l.id,
                    text: l.text,
                })
            }
        })
        .collect()
}

pub fn parse_qrels(path: &Path, text: &str) -> Result<Qrels> {
    let mut qrels = Qrels::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
        if cols.len() < 3 {
            return Err(Error::parse(path, i + 1, "expected query-id, corpus-id and score columns"));
        }
        let grade: i64 = cols[2]
            .parse()
            .map_err(|_| Error::parse(path, i + 1, format!("non-integer grade {:?}", cols[2])))?;
        let grade = u32::try_from(grade)
            .map_err(|_| Error::parse(path, i + 1, format!("negative grade {grade}")))?;
        qrels
            .insert(cols[0], cols[1], grade)
            .map_err(|e| Error::parse(path, i + 1, e))?;
    }
    Ok(qrels)
}

pub fn load_qrels(path: &Path) -> Result<Qrels> {
    parse_qrels(path, &fsio::read_string(path)?)
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub corpus: Vec<Document>,
    pub queries: Vec<QueryRecord>,
    pub qrels: Qrels,
}

pub struct DatasetPaths {
    pub corpus: PathBuf,
    pub queries: PathBuf,
    pub qrels: PathBuf,
}

impl DatasetPaths {
    pub fn new(dir: &Path, split: &str) -> Self {
        Self {
            corpus: dir.join("corpus.jsonl"),
            queries: dir.join("queries.jsonl"),
            qrels: dir.join("qrels").join(format!("{split}.tsv")),
        }
    }
}

pub fn load_dataset(dir: &Path, split: &str) -> Result<Dataset> {
    let p = DatasetPaths::new(dir, split);
    Ok(Dataset {
        corpus: load_corpus(&p.corpus)?,
        queries: load_queries(&p.queries)?,
        qrels: load_qrels(&p.qrels)?,
    })
}

/// One expanded-corpus line. Generation metadata is optional so files
/// holding only `_id` and `queries` read back the same way.
#[derive(Debug, Serialize, Deserialize)]
struct ExpandedLine {
    #[serde(rename = "_id")]
    id: String,
    queries: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    topics_used: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    keywords_used: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    batches_issued: Option<u32>,
}

impl ExpandedLine {
    fn plain(id: String, queries: Vec<String>) -> Self {
        Self {
            id,
            queries,
            topics_used: None,
            keywords_used: None,
            batches_issued: None,
        }
    }
}

pub fn write_expanded_corpus(path: &Path, docs: &[ExpandedDocument]) -> Result<()> {
    let mut lines = Vec::with_capacity(docs.len());
    for d in docs {
        d.validate()?;
        lines.push(ExpandedLine::plain(d.doc_id.clone(), d.queries.clone()));
    }
    fsio::write_jsonl(path, &lines)
}

/// Writes generation records as an expanded corpus that also keeps the
/// topics, keywords and batch count each document was generated with.
pub fn write_generation_records(path: &Path, records: &[GenerationRecord]) -> Result<()> {
    let mut lines = Vec::with_capacity(records.len());
    for r in records {
        ExpandedDocument {
            doc_id: r.doc_id.clone(),
            queries: r.queries.clone(),
        }
        .validate()?;
        lines.push(ExpandedLine {
            id: r.doc_id.clone(),
            queries: r.queries.clone(),
            topics_used: Some(r.topics_used.clone()),
            keywords_used: Some(r.keywords_used.clone()),
            batches_issued: Some(r.batches_issued),
        });
    }
    fsio::write_jsonl(path, &lines)
}

pub fn read_expanded_corpus(path: &Path) -> Result<Vec<ExpandedDocument>> {
    let lines: Vec<ExpandedLine> = fsio::read_jsonl(path)?;
    check_unique(path, lines.iter().map(|l| &l.id))?;
    Ok(lines
        .into_iter()
        .map(|l| ExpandedDocument {
            doc_id: l.id,
            queries: l.queries,
        })
        .collect())
}
