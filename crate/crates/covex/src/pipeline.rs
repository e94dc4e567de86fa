//! Pipeline stages. Each stage reads the artifacts of earlier stages from the
//! output directory, writes its own atomically and returns a one-line
//! summary.
//!
//! Output directory layout:
//!
//! ```text
//! sentences.jsonl          ingest
//! topic_model.json         fit-topics
//! doc_topics.jsonl         fit-topics
//! keywords.jsonl           extract-keywords
//! expanded.jsonl           generate (expanded_f.jsonl, expanded_fk.jsonl from ablate)
//! index/sparse.json        index-sparse (sparse_noexp.json with --no-expansion)
//! index/text.cvxd          index-dense
//! index/queries.cvxd       index-dense
//! index/append.cvxd        index-dense
//! runs/<name>.trec         search
//! runs/<name>.eval.json    evaluate
//! topic_recall.json        topic-recall
//! sweeps/alpha.csv         sweep-alpha
//! sweeps/query_count.csv   sweep-query-count
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use covex_core::backend::{check_dimensions, ChatModel, Embedder};
use covex_core::corpus::{Document, ExpandedDocument, Qrels, QueryRecord};
use covex_core::dense::{search_fused, search_text, FusionParams, QueryIndex, Similarity, TextIndex};
use covex_core::eval::{evaluate, pearson, topic_recall, DocTopicRecall, Metric, MetricReport, MetricSummary, Run, RunEntry, TopicRecallReport};
use covex_core::keywords::{extract_doc_keywords, select_keywords_llm, topic_keywords_for_doc, KeywordSets};
use covex_core::qgen::{default_exemplars, generate_queries, GenerationInput, PromptMode, QgenExemplar};
use covex_core::sparse::{bm25_search, build_index, expand_text, InvertedIndex};
use covex_core::text::{segment_sentences, Analyzer, SentenceSet};
use covex_core::topics::{
    default_naming_exemplars, document_topics, fit_topic_model, DocumentTopics, SentenceInput, SentenceRef, TopicModel,
};
use covex_core::vector::Embedding;
use rayon::prelude::*;
use serde::Serialize;

use crate::beir::{self, DatasetPaths};
use crate::config::{build_chat, build_embedder, PipelineConfig};
use crate::error::{Error, Result};
use crate::{fewshot, fsio, snapshot, trec};

/// The alpha grid swept when none is given: 0.0, 0.1, ..., 1.0.
pub fn default_alpha_grid() -> Vec<f64> {
    (0..=10).map(|i| f64::from(i) / 10.0).collect()
}

/// Query counts swept when none are given.
pub const DEFAULT_QUERY_COUNTS: [usize; 5] = [0, 5, 10, 20, 30];

/// Where every artifact lives under the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn sentences(&self) -> PathBuf {
        self.root.join("sentences.jsonl")
    }

    pub fn topic_model(&self) -> PathBuf {
        self.root.join("topic_model.json")
    }

    pub fn doc_topics(&self) -> PathBuf {
        self.root.join("doc_topics.jsonl")
    }

    pub fn keywords(&self) -> PathBuf {
        self.root.join("keywords.jsonl")
    }

    pub fn expanded(&self, mode: PromptMode) -> PathBuf {
        self.root.join(match mode {
            PromptMode::Full => "expanded.jsonl",
            PromptMode::FK => "expanded_fk.jsonl",
            PromptMode::F => "expanded_f.jsonl",
        })
    }

    pub fn sparse_index(&self, expanded: bool) -> PathBuf {
        self.root
            .join("index")
            .join(if expanded { "sparse.json" } else { "sparse_noexp.json" })
    }

    pub fn text_index(&self) -> PathBuf {
        self.root.join("index/text.cvxd")
    }

    pub fn query_index(&self) -> PathBuf {
        self.root.join("index/queries.cvxd")
    }

    pub fn append_index(&self) -> PathBuf {
        self.root.join("index/append.cvxd")
    }

    pub fn run(&self, name: &str) -> PathBuf {
        self.root.join("runs").join(format!("{name}.trec"))
    }

    pub fn topic_recall(&self) -> PathBuf {
        self.root.join("topic_recall.json")
    }

    pub fn alpha_sweep(&self) -> PathBuf {
        self.root.join("sweeps/alpha.csv")
    }

    pub fn query_count_sweep(&self) -> PathBuf {
        self.root.join("sweeps/query_count.csv")
    }
}

/// Default location of the metric report for a run file.
pub fn report_path_for(run: &Path) -> PathBuf {
    let stem = run.file_stem().map_or_else(|| "run".into(), |s| s.to_string_lossy().into_owned());
    run.with_file_name(format!("{stem}.eval.json"))
}

/// Search strategies exposed by `search`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMode {
    Sparse,
    Text,
    Fused,
    Append,
}

impl SearchMode {
    pub fn name(self) -> &'static str {
        match self {
            SearchMode::Sparse => "sparse",
            SearchMode::Text => "text",
            SearchMode::Fused => "fused",
            SearchMode::Append => "append",
        }
    }
}

impl std::str::FromStr for SearchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sparse" | "bm25" => Ok(SearchMode::Sparse),
            "text" | "dense" => Ok(SearchMode::Text),
            "fused" => Ok(SearchMode::Fused),
            "append" => Ok(SearchMode::Append),
            other => Err(Error::Config(format!(
                "unknown search mode {other:?} (expected sparse, text, fused or append)"
            ))),
        }
    }
}

/// Metric report as written by `evaluate`: one entry per metric plus the
/// queries left out for lacking relevant documents.
#[derive(Debug, Clone, Serialize)]
pub struct EvalOutput {
    #[serde(flatten)]
    pub metrics: BTreeMap<String, MetricSummary>,
    pub excluded_queries: Vec<String>,
}

impl From<MetricReport> for EvalOutput {
    fn from(r: MetricReport) -> Self {
        Self {
            metrics: r.metrics,
            excluded_queries: r.excluded_queries,
        }
    }
}

/// One row of a sweep table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub setting: f64,
    pub ndcg_at_10: f64,
    pub recall_at_100: f64,
}

const SWEEP_METRICS: [Metric; 2] = [Metric::Ndcg(10), Metric::Recall(100)];

impl SweepRow {
    fn from_report(setting: f64, report: &MetricReport) -> Self {
        Self {
            setting,
            ndcg_at_10: report.ndcg_at_10().unwrap_or(0.0),
            recall_at_100: report.recall_at_100().unwrap_or(0.0),
        }
    }
}

/// CSV with a header; numbers use the shortest exact representation.
pub fn render_sweep_csv(setting: &str, rows: &[SweepRow]) -> String {
    let mut out = format!("{setting},ndcg@10,recall@100\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.setting, r.ndcg_at_10, r.recall_at_100);
    }
    out
}

pub fn parse_sweep_csv(path: &Path, text: &str) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse(path, i + 1, e))?;
        if cols.len() != 3 {
            return Err(Error::parse(path, i + 1, "expected 3 columns"));
        }
        rows.push(SweepRow {
            setting: cols[0],
            ndcg_at_10: cols[1],
            recall_at_100: cols[2],
        });
    }
    Ok(rows)
}

/// Aligned, human-readable version of a sweep table.
pub fn render_sweep_table(setting: &str, rows: &[SweepRow]) -> String {
    let mut out = format!("{setting:>8}  {:>8}  {:>10}\n", "nDCG@10", "Recall@100");
    for r in rows {
        let _ = writeln!(out, "{:>8}  {:>8.4}  {:>10.4}", r.setting, r.ndcg_at_10, r.recall_at_100);
    }
    out
}

fn missing(path: &Path, stage: &str) -> Error {
    Error::MissingInput {
        path: path.to_path_buf(),
        hint: format!("run `covex {stage}` first"),
    }
}

fn require(path: &Path, stage: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(missing(path, stage))
    }
}

/// Embeds `texts` in batches on the worker pool, preserving order.
pub fn embed_texts(embedder: &dyn Embedder, texts: &[String], batch_size: usize) -> Result<Vec<Embedding>> {
    let chunks: Vec<Vec<Embedding>> = texts
        .par_chunks(batch_size.max(1))
        .map(|chunk| {
            let refs: Vec<&str> = chunk.iter().map(String::as_str).collect();
            let vectors = embedder.embed_batch(&refs)?;
            if vectors.len() != chunk.len() {
                return Err(covex_core::BackendError::Malformed(format!(
                    "expected {} embeddings, got {}",
                    chunk.len(),
                    vectors.len()
                ))
                .into());
            }
            check_dimensions(embedder.dimension(), &vectors)?;
            Ok(vectors)
        })
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

fn by_id<T>(items: Vec<T>, id: impl Fn(&T) -> &str) -> BTreeMap<String, T> {
    items.into_iter().map(|t| (id(&t).to_string(), t)).collect()
}

/// Index texts for BM25: the body, followed by the first `m` generated
/// queries when expansions are given.
pub fn sparse_texts(
    corpus: &[Document],
    expansions: Option<&BTreeMap<String, ExpandedDocument>>,
    m: Option<usize>,
    include_title: bool,
) -> Result<Vec<(String, String)>> {
    corpus
        .iter()
        .map(|d| {
            let text = match expansions {
                None => d.body(include_title),
                Some(map) => {
                    let e = map
                        .get(&d.doc_id)
                        .ok_or_else(|| covex_core::Error::MissingQueries(d.doc_id.clone()))?;
                    match m {
                        Some(m) => expand_text(d, &e.truncated(m), include_title)?,
                        None => expand_text(d, e, include_title)?,
                    }
                }
            };
            Ok((d.doc_id.clone(), text))
        })
        .collect()
}

/// BM25 run over all queries at `depth`.
pub fn sparse_run(index: &InvertedIndex, queries: &[QueryRecord], depth: usize) -> Run {
    let ranked: Vec<(String, Vec<RunEntry>)> = queries
        .par_iter()
        .map(|q| {
            let hits = bm25_search(index, &q.text, depth);
            (
                q.query_id.clone(),
                hits.into_iter()
                    .map(|h| RunEntry {
                        doc_id: h.doc_id,
                        score: h.score,
                    })
                    .collect(),
            )
        })
        .collect();
    collect_run(ranked)
}

fn collect_run(ranked: Vec<(String, Vec<RunEntry>)>) -> Run {
    let mut run = Run::new();
    for (q, entries) in ranked {
        run.insert(q, entries);
    }
    run
}

pub fn text_run(index: &TextIndex, similarity: Similarity, query_vectors: &[(String, Embedding)], depth: usize) -> Result<Run> {
    let ranked = query_vectors
        .par_iter()
        .map(|(q, v)| {
            let hits = search_text(v, index, similarity, depth)?;
            Ok((
                q.clone(),
                hits.into_iter()
                    .map(|h| RunEntry {
                        doc_id: h.doc_id,
                        score: h.score,
                    })
                    .collect(),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(collect_run(ranked))
}

pub fn fused_run(
    text_index: &TextIndex,
    query_index: &QueryIndex,
    params: &FusionParams,
    query_vectors: &[(String, Embedding)],
    depth: usize,
) -> Result<Run> {
    let ranked = query_vectors
        .par_iter()
        .map(|(q, v)| {
            let hits = search_fused(v, text_index, query_index, params, depth)?;
            Ok((
                q.clone(),
                hits.into_iter()
                    .map(|h| RunEntry {
                        doc_id: h.doc_id,
                        score: h.s,
                    })
                    .collect(),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(collect_run(ranked))
}

/// A configured pipeline: settings, backends and artifact layout.
pub struct Pipeline {
    pub config: PipelineConfig,
    pub layout: Layout,
    embedder: Box<dyn Embedder>,
    chat: Box<dyn ChatModel>,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        let embedder = build_embedder(&config.embedding)?;
        let chat = build_chat(&config.chat)?;
        Ok(Self::with_backends(config, embedder, chat))
    }

    pub fn with_backends(config: PipelineConfig, embedder: Box<dyn Embedder>, chat: Box<dyn ChatModel>) -> Self {
        Self {
            layout: Layout::new(config.output_dir.clone()),
            config,
            embedder,
            chat,
        }
    }

    fn paths(&self) -> DatasetPaths {
        DatasetPaths::new(&self.config.dataset.dir, &self.config.dataset.split)
    }

    fn include_title(&self) -> bool {
        self.config.dataset.include_title
    }

    fn corpus(&self) -> Result<Vec<Document>> {
        beir::load_corpus(&self.paths().corpus)
    }

    fn queries(&self) -> Result<Vec<QueryRecord>> {
        beir::load_queries(&self.paths().queries)
    }

    fn qrels(&self) -> Result<Qrels> {
        beir::load_qrels(&self.paths().qrels)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        embed_texts(self.embedder.as_ref(), texts, self.config.embedding.batch_size)
    }

    fn topic_model(&self) -> Result<TopicModel> {
        let p = self.layout.topic_model();
        require(&p, "fit-topics")?;
        fsio::read_json(&p)
    }

    fn doc_topics(&self) -> Result<BTreeMap<String, DocumentTopics>> {
        let p = self.layout.doc_topics();
        require(&p, "fit-topics")?;
        Ok(by_id(fsio::read_jsonl(&p)?, |d: &DocumentTopics| &d.doc_id))
    }

    fn expansions(&self, path: Option<&Path>) -> Result<BTreeMap<String, ExpandedDocument>> {
        let p = path.map_or_else(|| self.layout.expanded(PromptMode::Full), Path::to_path_buf);
        require(&p, "generate")?;
        Ok(by_id(beir::read_expanded_corpus(&p)?, |e| &e.doc_id))
    }

    fn query_vectors(&self, queries: &[QueryRecord]) -> Result<Vec<(String, Embedding)>> {
        let texts: Vec<String> = queries.iter().map(|q| q.text.clone()).collect();
        let vectors = self.embed(&texts)?;
        Ok(queries.iter().map(|q| q.query_id.clone()).zip(vectors).collect())
    }

    fn exemplars(&self) -> Result<Vec<QgenExemplar>> {
        match &self.config.generation.fewshot {
            Some(p) => fewshot::load_exemplars(p),
            None => Ok(default_exemplars()),
        }
    }

    /// Validates the dataset and segments every document into sentences.
    pub fn ingest(&self) -> Result<String> {
        let paths = self.paths();
        let corpus = beir::load_corpus(&paths.corpus)?;
        let queries = beir::load_queries(&paths.queries)?;
        let qrels = beir::load_qrels(&paths.qrels)?;
        let sets: Vec<SentenceSet> = corpus.par_iter().map(segment_sentences).collect();
        fsio::write_jsonl(&self.layout.sentences(), &sets)?;
        let n_sentences: usize = sets.iter().map(|s| s.sentences.len()).sum();
        Ok(format!(
            "ingest: {} documents, {n_sentences} sentences, {} queries, {} judged queries",
            corpus.len(),
            queries.len(),
            qrels.len()
        ))
    }

    /// Clusters sentence embeddings into topics and assigns topics to
    /// documents.
    pub fn fit_topics(&self) -> Result<String> {
        let p = self.layout.sentences();
        require(&p, "ingest")?;
        let sets: Vec<SentenceSet> = fsio::read_jsonl(&p)?;
        let mut refs = Vec::new();
        let mut texts = Vec::new();
        for set in &sets {
            for (index, s) in set.sentences.iter().enumerate() {
                refs.push(SentenceRef {
                    doc_id: set.doc_id.clone(),
                    index,
                });
                texts.push(s.text.clone());
            }
        }
        let embeddings = self.embed(&texts)?;
        let inputs: Vec<SentenceInput<'_>> = refs
            .into_iter()
            .zip(&texts)
            .zip(&embeddings)
            .map(|((reference, text), embedding)| SentenceInput {
                reference,
                text,
                embedding: embedding.clone(),
            })
            .collect();
        let fitted = fit_topic_model(
            &inputs,
            &self.config.topics,
            self.chat.as_ref(),
            &default_naming_exemplars(),
        )?;
        let model = fitted.model;

        let mut start = 0;
        let mut doc_topics = Vec::with_capacity(sets.len());
        for set in &sets {
            let end = start + set.sentences.len();
            doc_topics.push(document_topics(&set.doc_id, &embeddings[start..end], &model)?);
            start = end;
        }
        fsio::write_json(&self.layout.topic_model(), &model)?;
        fsio::write_jsonl(&self.layout.doc_topics(), &doc_topics)?;
        let uncovered = doc_topics.iter().filter(|d| d.topic_ids.is_empty()).count();
        let silhouette = fitted
            .silhouette
            .map_or_else(|| "n/a".to_string(), |s| format!("{s:.4}"));
        Ok(format!(
            "fit-topics: {} topics from {} sentences (silhouette {silhouette}), {uncovered} documents without topics",
            model.topic_count(),
            texts.len()
        ))
    }

    /// Document-level MMR keywords, topic keywords and the LLM selection.
    pub fn extract_keywords(&self) -> Result<String> {
        let corpus = self.corpus()?;
        let model = self.topic_model()?;
        let doc_topics = self.doc_topics()?;
        let bodies: Vec<String> = corpus.iter().map(|d| d.body(self.include_title())).collect();
        let doc_vectors = self.embed(&bodies)?;
        let embedder = self.embedder.as_ref();
        let chat = self.chat.as_ref();
        let cfg = &self.config.keywords;
        let sets = corpus
            .par_iter()
            .zip(bodies.par_iter())
            .zip(doc_vectors.par_iter())
            .map(|((doc, body), v)| {
                let topics = doc_topics.get(&doc.doc_id).ok_or_else(|| {
                    Error::format(
                        self.layout.doc_topics(),
                        format!("no entry for document {}; rerun `covex fit-topics`", doc.doc_id),
                    )
                })?;
                let topic_level = topic_keywords_for_doc(topics, &model)?;
                let doc_level = extract_doc_keywords(body, v, embedder, cfg)?;
                let selected = select_keywords_llm(body, &doc_level, &topic_level, chat, cfg);
                Ok(KeywordSets {
                    doc_id: doc.doc_id.clone(),
                    topic_level,
                    doc_level,
                    selected,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        fsio::write_jsonl(&self.layout.keywords(), &sets)?;
        let selected: usize = sets.iter().map(|s| s.selected.len()).sum();
        Ok(format!(
            "extract-keywords: {} documents, {selected} selected keywords",
            sets.len()
        ))
    }

    /// Generates queries for every document with the given prompt mode.
    pub fn generate(&self, mode: PromptMode, output: Option<&Path>) -> Result<String> {
        let corpus = self.corpus()?;
        let model = self.topic_model()?;
        let doc_topics = self.doc_topics()?;
        let kp = self.layout.keywords();
        require(&kp, "extract-keywords")?;
        let keywords = by_id(fsio::read_jsonl::<KeywordSets>(&kp)?, |k| &k.doc_id);
        let exemplars = self.exemplars()?;
        let chat = self.chat.as_ref();
        let gen = &self.config.generation.params;

        let records = corpus
            .par_iter()
            .map(|doc| {
                let topic_names = doc_topics
                    .get(&doc.doc_id)
                    .map(|t| {
                        t.topic_ids
                            .iter()
                            .map(|&id| model.name(id).map(str::to_string))
                            .collect::<covex_core::Result<Vec<_>>>()
                    })
                    .transpose()?
                    .unwrap_or_default();
                let selected = keywords.get(&doc.doc_id).map(|k| k.selected.clone()).unwrap_or_default();
                let body = doc.body(self.include_title());
                let input = GenerationInput {
                    doc_id: &doc.doc_id,
                    body: &body,
                    topic_names: &topic_names,
                    keywords: &selected,
                };
                Ok(generate_queries(input, gen, mode, &exemplars, chat)?)
            })
            .collect::<Result<Vec<_>>>()?;
        let out = output.map_or_else(|| self.layout.expanded(mode), Path::to_path_buf);
        beir::write_generation_records(&out, &records)?;
        let total: usize = records.iter().map(|r| r.queries.len()).sum();
        let short = records.iter().filter(|r| r.queries.len() < gen.num_queries).count();
        let batches: u64 = records.iter().map(|r| u64::from(r.batches_issued)).sum();
        Ok(format!(
            "generate[{}]: {} documents, {total} queries in {batches} batches, {short} short of {} -> {}",
            mode.label(),
            records.len(),
            gen.num_queries,
            out.display()
        ))
    }

    pub fn index_sparse(&self, expansion: bool, expanded: Option<&Path>, output: Option<&Path>) -> Result<String> {
        let corpus = self.corpus()?;
        let expansions = if expansion { Some(self.expansions(expanded)?) } else { None };
        let texts = sparse_texts(&corpus, expansions.as_ref(), None, self.include_title())?;
        let index = build_index(texts, self.config.bm25, Analyzer::default())?;
        let out = output.map_or_else(|| self.layout.sparse_index(expansion), Path::to_path_buf);
        snapshot::write_sparse(&out, &index)?;
        Ok(format!(
            "index-sparse: {} documents, {} terms, avg length {:.1} -> {}",
            index.doc_count(),
            index.postings.len(),
            index.avg_doc_length,
            out.display()
        ))
    }

    pub fn index_dense(&self, expansion: bool, expanded: Option<&Path>) -> Result<String> {
        let corpus = self.corpus()?;
        let sim = self.config.fusion.similarity;
        let dim = self.embedder.dimension();
        let ids: Vec<String> = corpus.iter().map(|d| d.doc_id.clone()).collect();
        let bodies: Vec<String> = corpus.iter().map(|d| d.body(self.include_title())).collect();
        let text_index = TextIndex::new(dim, ids.clone(), self.embed(&bodies)?)?;
        snapshot::write_text_index(&self.layout.text_index(), &text_index, sim)?;
        if !expansion {
            return Ok(format!("index-dense: {} document vectors", text_index.len()));
        }

        let expansions = self.expansions(expanded)?;
        let mut owners = Vec::new();
        let mut texts = Vec::new();
        for (ordinal, d) in corpus.iter().enumerate() {
            let e = expansions
                .get(&d.doc_id)
                .ok_or_else(|| covex_core::Error::MissingQueries(d.doc_id.clone()))?;
            for q in &e.queries {
                owners.push(ordinal as u32);
                texts.push(q.clone());
            }
        }
        let flat: Vec<f32> = self.embed(&texts)?.into_iter().flat_map(Embedding::into_values).collect();
        let query_index = QueryIndex::from_raw(dim, ids.clone(), owners, flat)?;
        snapshot::write_query_index(&self.layout.query_index(), &query_index, sim)?;

        let appended = sparse_texts(&corpus, Some(&expansions), None, self.include_title())?;
        let appended: Vec<String> = appended.into_iter().map(|(_, t)| t).collect();
        let append_index = TextIndex::new(dim, ids, self.embed(&appended)?)?;
        snapshot::write_text_index(&self.layout.append_index(), &append_index, sim)?;
        Ok(format!(
            "index-dense: {} document vectors, {} query vectors, {} appended vectors",
            text_index.len(),
            query_index.len(),
            append_index.len()
        ))
    }

    /// Runs every dataset query and writes a TREC run; returns the summary
    /// and the run path.
    pub fn search(
        &self,
        mode: SearchMode,
        alpha: Option<f64>,
        expansion: bool,
        output: Option<&Path>,
    ) -> Result<(String, PathBuf)> {
        let queries = self.queries()?;
        let depth = self.config.search.depth;
        let name = match (mode, expansion) {
            (SearchMode::Sparse, false) => "sparse_noexp".to_string(),
            (SearchMode::Fused, _) => match alpha {
                Some(a) => format!("fused_a{a}"),
                None => "fused".to_string(),
            },
            (m, _) => m.name().to_string(),
        };
        let run = match mode {
            SearchMode::Sparse => {
                let p = self.layout.sparse_index(expansion);
                require(&p, if expansion { "index-sparse" } else { "index-sparse --no-expansion" })?;
                sparse_run(&snapshot::read_sparse(&p)?, &queries, depth)
            }
            SearchMode::Text | SearchMode::Append => {
                let p = if mode == SearchMode::Text { self.layout.text_index() } else { self.layout.append_index() };
                require(&p, "index-dense")?;
                let (index, sim) = snapshot::read_text_index(&p)?;
                text_run(&index, sim, &self.query_vectors(&queries)?, depth)?
            }
            SearchMode::Fused => {
                let (ti, qi, params) = self.fusion_inputs(alpha)?;
                fused_run(&ti, &qi, &params, &self.query_vectors(&queries)?, depth)?
            }
        };
        let out = output.map_or_else(|| self.layout.run(&name), Path::to_path_buf);
        trec::write_run(&out, &run, &format!("covex-{name}"))?;
        Ok((
            format!("search[{name}]: {} queries at depth {depth} -> {}", run.queries.len(), out.display()),
            out,
        ))
    }

    fn fusion_inputs(&self, alpha: Option<f64>) -> Result<(TextIndex, QueryIndex, FusionParams)> {
        let tp = self.layout.text_index();
        let qp = self.layout.query_index();
        require(&tp, "index-dense")?;
        require(&qp, "index-dense")?;
        let (ti, sim_t) = snapshot::read_text_index(&tp)?;
        let (qi, sim_q) = snapshot::read_query_index(&qp)?;
        if sim_t != sim_q {
            return Err(Error::format(&qp, "query index similarity differs from the document index"));
        }
        let mut params = self.config.fusion;
        params.similarity = sim_t;
        if let Some(a) = alpha {
            params.alpha = a;
        }
        params.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok((ti, qi, params))
    }

    /// Per-document topic recall of the generated queries; with both runs
    /// given, also the Pearson correlation between each query's nDCG@10 gain
    /// over the baseline and the mean topic recall of the source documents of
    /// its top-10 retrieved documents.
    pub fn topic_recall(&self, expanded: Option<&Path>, runs: Option<(&Path, &Path)>) -> Result<String> {
        let model = self.topic_model()?;
        let doc_topics = self.doc_topics()?;
        let expansions = self.expansions(expanded)?;
        let embedder = self.embedder.as_ref();
        let per_doc = expansions
            .par_iter()
            .map(|(doc_id, e)| {
                let gold = doc_topics.get(doc_id).map(|d| d.topic_ids.clone()).unwrap_or_default();
                let assigned = covex_core::eval::query_topics(&e.queries, &model, embedder)?;
                let recall = topic_recall(&gold, &e.queries, &model, embedder)?;
                Ok(DocTopicRecall {
                    doc_id: doc_id.clone(),
                    gold,
                    assigned,
                    recall,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let report = TopicRecallReport::from_docs(per_doc);

        #[derive(Serialize)]
        struct Correlation {
            pearson: Option<f64>,
            queries: usize,
        }
        #[derive(Serialize)]
        struct Output<'a> {
            #[serde(flatten)]
            report: &'a TopicRecallReport,
            #[serde(skip_serializing_if = "Option::is_none")]
            correlation: Option<Correlation>,
        }

        let correlation = match runs {
            None => None,
            Some((run_path, baseline_path)) => {
                let qrels = self.qrels()?;
                let run = trec::read_run(run_path)?;
                let baseline = trec::read_run(baseline_path)?;
                let metric = [Metric::Ndcg(10)];
                let a = evaluate(&run, &qrels, &metric);
                let b = evaluate(&baseline, &qrels, &metric);
                let recall: BTreeMap<&str, f64> = report
                    .per_doc
                    .iter()
                    .filter_map(|d| d.recall.map(|r| (d.doc_id.as_str(), r)))
                    .collect();
                let (mut xs, mut ys) = (Vec::new(), Vec::new());
                let name = Metric::Ndcg(10).name();
                for (q, gain_run) in &a.metrics[&name].per_query {
                    let gain = gain_run - b.metrics[&name].per_query.get(q).copied().unwrap_or(0.0);
                    let top: Vec<f64> = run
                        .ranked(q)
                        .into_iter()
                        .take(10)
                        .filter_map(|d| recall.get(d).copied())
                        .collect();
                    if !top.is_empty() {
                        xs.push(top.iter().sum::<f64>() / top.len() as f64);
                        ys.push(gain);
                    }
                }
                let r = match pearson(&xs, &ys) {
                    Ok(r) => Some(r),
                    Err(e) => {
                        log::warn!("correlation not computed: {e}");
                        None
                    }
                };
                Some(Correlation {
                    pearson: r,
                    queries: xs.len(),
                })
            }
        };
        let out = self.layout.topic_recall();
        fsio::write_json(
            &out,
            &Output {
                report: &report,
                correlation: correlation.as_ref().map(|c| Correlation {
                    pearson: c.pearson,
                    queries: c.queries,
                }),
            },
        )?;
        let mean = report.mean.map_or_else(|| "n/a".into(), |m| format!("{m:.4}"));
        let corr = correlation
            .and_then(|c| c.pearson)
            .map_or_else(String::new, |r| format!(", pearson {r:.4}"));
        Ok(format!(
            "topic-recall: mean {mean} over {} documents{corr} -> {}",
            report.per_doc.len(),
            out.display()
        ))
    }

    /// nDCG@10 and Recall@100 of fused retrieval at every alpha.
    pub fn sweep_alpha(&self, alphas: &[f64]) -> Result<Vec<SweepRow>> {
        if alphas.is_empty() {
            return Err(Error::Config("no alpha values given".into()));
        }
        let (ti, qi, base) = self.fusion_inputs(None)?;
        let qrels = self.qrels()?;
        let vectors = self.query_vectors(&self.queries()?)?;
        let mut rows = Vec::with_capacity(alphas.len());
        for &alpha in alphas {
            let params = FusionParams { alpha, ..base };
            params.validate().map_err(|e| Error::Config(e.to_string()))?;
            let run = fused_run(&ti, &qi, &params, &vectors, self.config.search.depth)?;
            rows.push(SweepRow::from_report(alpha, &evaluate(&run, &qrels, &SWEEP_METRICS)));
        }
        fsio::atomic_write(&self.layout.alpha_sweep(), render_sweep_csv("alpha", &rows).as_bytes())?;
        Ok(rows)
    }

    /// BM25 with each document's first `m` queries appended, for every `m`
    /// in ascending order; `m = 0` indexes the unexpanded corpus.
    pub fn sweep_query_count(&self, counts: &[usize], expanded: Option<&Path>) -> Result<Vec<SweepRow>> {
        let mut counts = counts.to_vec();
        counts.sort_unstable();
        counts.dedup();
        if counts.is_empty() {
            return Err(Error::Config("no query counts given".into()));
        }
        let corpus = self.corpus()?;
        let queries = self.queries()?;
        let qrels = self.qrels()?;
        let expansions = if counts.iter().any(|&m| m > 0) { Some(self.expansions(expanded)?) } else { None };
        let mut rows = Vec::with_capacity(counts.len());
        for m in counts {
            let source = if m == 0 { None } else { expansions.as_ref() };
            let texts = sparse_texts(&corpus, source, Some(m), self.include_title())?;
            let index = build_index(texts, self.config.bm25, Analyzer::default())?;
            let run = sparse_run(&index, &queries, self.config.search.depth);
            rows.push(SweepRow::from_report(m as f64, &evaluate(&run, &qrels, &SWEEP_METRICS)));
        }
        fsio::atomic_write(&self.layout.query_count_sweep(), render_sweep_csv("m", &rows).as_bytes())?;
        Ok(rows)
    }
}

/// Scores a run file against qrels and writes the JSON report.
pub fn evaluate_run(run_path: &Path, qrels_path: &Path, metrics: &[Metric], output: Option<&Path>) -> Result<(String, EvalOutput)> {
    if metrics.is_empty() {
        return Err(Error::Config("no metrics requested".into()));
    }
    let run = trec::read_run(run_path)?;
    let qrels = beir::load_qrels(qrels_path)?;
    let report = evaluate(&run, &qrels, metrics);
    let out = output.map_or_else(|| report_path_for(run_path), Path::to_path_buf);
    let means: Vec<String> = metrics
        .iter()
        .map(|m| format!("{} {:.4}", m.name(), report.mean(*m).unwrap_or(0.0)))
        .collect();
    let scored = report.metrics.values().next().map_or(0, |m| m.per_query.len());
    let output = EvalOutput::from(report);
    fsio::write_json(&out, &output)?;
    Ok((
        format!(
            "evaluate: {} over {scored} queries ({} excluded) -> {}",
            means.join(", "),
            output.excluded_queries.len(),
            out.display()
        ),
        output,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_has_eleven_points() {
        let g = default_alpha_grid();
        assert_eq!(g.len(), 11);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[10], 1.0);
        assert_eq!(g[3], 0.3);
    }

    #[test]
    fn sweep_csv_round_trips_exactly() {
        let rows = vec![
            SweepRow { setting: 0.0, ndcg_at_10: 1.0 / 3.0, recall_at_100: 0.1 + 0.2 },
            SweepRow { setting: 30.0, ndcg_at_10: 0.0, recall_at_100: 1.0 },
        ];
        let text = render_sweep_csv("m", &rows);
        assert!(text.starts_with("m,ndcg@10,recall@100\n0,"));
        assert_eq!(parse_sweep_csv(Path::new("s.csv"), &text).unwrap(), rows);
    }

    #[test]
    fn report_path_sits_next_to_run() {
        assert_eq!(report_path_for(Path::new("out/runs/fused.trec")), PathBuf::from("out/runs/fused.eval.json"));
    }

    #[test]
    fn eval_output_is_keyed_by_metric() {
        let mut metrics = BTreeMap::new();
        metrics.insert(
            "map".to_string(),
            MetricSummary {
                mean: 0.5,
                per_query: BTreeMap::from([("q1".to_string(), 0.5)]),
            },
        );
        let out = EvalOutput {
            metrics,
            excluded_queries: vec![],
        };
        let v: serde_json::Value = serde_json::to_value(&out).unwrap();
        assert_eq!(v["map"]["mean"], 0.5);
        assert_eq!(v["map"]["per_query"]["q1"], 0.5);
    }
}
