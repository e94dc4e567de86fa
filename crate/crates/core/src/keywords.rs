//! Document keywords: n-gram candidates ranked by embedding similarity and
//! diversified with Maximal Marginal Relevance, pooled with topic keywords,
//! then narrowed by a chat model.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::backend::{ChatModel, ChatRequest, Embedder};
use crate::error::{Error, Result};
use crate::text::{is_numeric, is_stopword, words};
use crate::topics::{DocumentTopics, TopicModel};
use crate::vector::{cosine, Embedding};

/// Marker that identifies a keyword-selection prompt.
pub const CANDIDATE_HEADER: &str = "Candidate keyword set:";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KeywordConfig {
    pub top_n: usize,
    pub lambda: f64,
    pub target: usize,
    pub max_ngram: usize,
    pub temperature: f64,
}

impl Default for KeywordConfig {
    fn default() -> Self {
        Self {
            top_n: 20,
            lambda: 0.7,
            target: 10,
            max_ngram: 3,
            temperature: 0.8,
        }
    }
}

impl KeywordConfig {
    pub fn validate(&self) -> Result<()> {
        if self.top_n == 0 || self.target == 0 || self.max_ngram == 0 {
            return Err(Error::InvalidParameter("top_n, target and max_ngram must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidParameter(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(Error::InvalidParameter("temperature must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordCandidate {
    pub phrase: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordSets {
    pub doc_id: String,
    pub topic_level: Vec<String>,
    pub doc_level: Vec<KeywordCandidate>,
    pub selected: Vec<String>,
}

impl KeywordSets {
    pub fn pool(&self) -> Vec<String> {
        keyword_pool(&self.doc_level, &self.topic_level)
    }
}

/// Distinct 1..=`max_n` word windows that neither start nor end on a
/// stop-word and contain no numeric-only word, sorted lexicographically.
pub fn candidate_ngrams(body: &str, max_n: usize) -> Vec<String> {
    let tokens: Vec<String> = words(body).collect();
    let mut out = BTreeSet::new();
    for start in 0..tokens.len() {
        if is_stopword(&tokens[start]) {
            continue;
        }
        for n in 1..=max_n {
            let end = start + n;
            if end > tokens.len() {
                break;
            }
            let window = &tokens[start..end];
            if window.iter().any(|w| is_numeric(w)) {
                break;
            }
            if is_stopword(&window[n - 1]) {
                continue;
            }
            out.insert(window.join(" "));
        }
    }
    out.into_iter().collect()
}

/// Greedy MMR over candidates `0..relevance.len()`.
///
/// The first pick maximizes relevance; each later pick maximizes
/// `lambda * rel(c) - (1 - lambda) * max_{s in selected} sim(c, s)`.
/// Ties go to the lower index, so callers wanting a lexicographic
/// tie-break pass candidates in lexicographic order.
pub fn mmr_select(
    relevance: &[f64],
    similarity: impl Fn(usize, usize) -> f64,
    top_n: usize,
    lambda: f64,
) -> Vec<usize> {
    let n = relevance.len();
    let mut selected: Vec<usize> = Vec::with_capacity(top_n.min(n));
    let mut taken = alloc::vec![false; n];
    // Running max similarity of each candidate to the selected set.
    let mut redundancy = alloc::vec![f64::NEG_INFINITY; n];
    while selected.len() < top_n.min(n) {
        let mut best: Option<(usize, f64)> = None;
        for c in 0..n {
            if taken[c] {
                continue;
            }
            let score = if selected.is_empty() {
                relevance[c]
            } else {
                lambda * relevance[c] - (1.0 - lambda) * redundancy[c]
            };
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((c, score));
            }
        }
        let Some((pick, _)) = best else { break };
        taken[pick] = true;
        selected.push(pick);
        for c in 0..n {
            if !taken[c] {
                redundancy[c] = redundancy[c].max(similarity(c, pick));
            }
        }
    }
    selected
}

/// Document-level keywords in MMR selection order.
pub fn extract_doc_keywords(
    body: &str,
    doc_embedding: &Embedding,
    embedder: &dyn Embedder,
    config: &KeywordConfig,
) -> Result<Vec<KeywordCandidate>> {
    let phrases = candidate_ngrams(body, config.max_ngram);
    if phrases.is_empty() {
        log::warn!("no keyword candidates after filtering");
        return Ok(Vec::new());
    }
    let refs: Vec<&str> = phrases.iter().map(String::as_str).collect();
    let vectors = embedder.embed_batch(&refs)?;
    let relevance: Vec<f64> = vectors
        .iter()
        .map(|v| cosine(v.values(), doc_embedding.values()))
        .collect();
    let picks = mmr_select(
        &relevance,
        |a, b| cosine(vectors[a].values(), vectors[b].values()),
        config.top_n,
        config.lambda,
    );
    Ok(picks
        .into_iter()
        .map(|i| KeywordCandidate {
            phrase: phrases[i].clone(),
            score: relevance[i],
        })
        .collect())
}

/// Keywords of every assigned topic (ascending id), first occurrence kept.
pub fn topic_keywords_for_doc(doc_topics: &DocumentTopics, model: &TopicModel) -> Result<Vec<String>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for &t in &doc_topics.topic_ids {
        for term in model.keyword_terms(t)? {
            if seen.insert(term) {
                out.push(String::from(term));
            }
        }
    }
    Ok(out)
}

/// Document-level phrases (MMR order) followed by topic-level phrases,
/// de-duplicated.
pub fn keyword_pool(doc_level: &[KeywordCandidate], topic_level: &[String]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    doc_level
        .iter()
        .map(|c| c.phrase.as_str())
        .chain(topic_level.iter().map(String::as_str))
        .filter(|p| seen.insert(*p))
        .map(String::from)
        .collect()
}

/// Pool order used for padding: doc-level by score descending (ties by
/// phrase), then the remaining topic-level phrases in their given order.
fn padding_order(doc_level: &[KeywordCandidate], topic_level: &[String]) -> Vec<String> {
    let mut docs: Vec<&KeywordCandidate> = doc_level.iter().collect();
    docs.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.phrase.cmp(&b.phrase))
    });
    let mut seen = BTreeSet::new();
    docs.into_iter()
        .map(|c| c.phrase.as_str())
        .chain(topic_level.iter().map(String::as_str))
        .filter(|p| seen.insert(*p))
        .map(String::from)
        .collect()
}

pub fn build_selection_prompt(body: &str, pool: &[String], target: usize) -> String {
    format!(
        "You will receive a document along with a set of candidate keywords. Your task is to select the keywords that best align with the core theme of the document. Exclude keywords that are too broad or less relevant. You may list up to {target} keywords, using only the keywords in the candidate keyword set:\n\n\
         Document:\n{body}\n\n\
         {CANDIDATE_HEADER}\n{}\n\n\
         Final Keywords:",
        pool.join(", ")
    )
}

fn strip_item(raw: &str) -> &str {
    let mut s = raw.trim();
    s = s.trim_start_matches(['-', '*', '\u{2022}']).trim_start();
    let digits = s.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 && matches!(s.as_bytes().get(digits), Some(b'.') | Some(b')')) {
        s = s[digits + 1..].trim_start();
    }
    s.trim_matches(|c: char| c == '"' || c == '\'' || c == '`' || c.is_whitespace())
        .trim_end_matches('.')
}

/// Pool phrases named in `completion` (case-insensitive exact matches, in
/// completion order, no repeats), at most `target`.
pub fn parse_selection(completion: &str, pool: &[String], target: usize) -> Vec<String> {
    let by_lower: BTreeMap<String, &String> = pool.iter().map(|p| (p.to_lowercase(), p)).collect();
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for item in completion.split([',', '\n', ';']) {
        if out.len() >= target {
            break;
        }
        let item = strip_item(item);
        let item = item
            .strip_prefix("Final Keywords:")
            .or_else(|| item.strip_prefix("final keywords:"))
            .map_or(item, str::trim);
        if let Some(&p) = by_lower.get(&item.to_lowercase()) {
            if seen.insert(p.as_str()) {
                out.push(p.clone());
            }
        }
    }
    out
}

/// Asks the chat model to pick up to `target` keywords from the pool.
/// Off-pool answers are dropped; short answers are padded; a backend failure
/// falls back to the padding order alone.
pub fn select_keywords_llm(
    body: &str,
    doc_level: &[KeywordCandidate],
    topic_level: &[String],
    chat: &dyn ChatModel,
    config: &KeywordConfig,
) -> Vec<String> {
    let pool = keyword_pool(doc_level, topic_level);
    let padding = padding_order(doc_level, topic_level);
    if pool.is_empty() {
        return Vec::new();
    }
    let prompt = build_selection_prompt(body, &pool, config.target);
    let mut selected = match chat.chat(&ChatRequest::new(prompt, config.temperature).with_seed(0)) {
        Ok(completion) => parse_selection(&completion, &pool, config.target),
        Err(e) => {
            log::warn!("keyword selection failed ({e}); using pool order");
            Vec::new()
        }
    };
    for p in padding {
        if selected.len() >= config.target {
            break;
        }
        if !selected.contains(&p) {
            selected.push(p);
        }
    }
    selected
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stub::StubEmbedder;
    use crate::testutil::Script;
    use crate::topics::{TopicId, WeightedTerm};
    use alloc::string::ToString;
    use alloc::vec;
    use proptest::prelude::*;

    fn cand(p: &str, s: f64) -> KeywordCandidate {
        KeywordCandidate {
            phrase: p.into(),
            score: s,
        }
    }

    #[test]
    fn ngram_windows_respect_stopword_boundaries() {
        let c = candidate_ngrams("The Bank of America raised 2 rates", 3);
        assert!(c.contains(&"bank of america".to_string()));
        assert!(c.contains(&"america raised".to_string()));
        assert!(!c.iter().any(|p| p.starts_with("the") || p.ends_with(" of")));
        assert!(!c.iter().any(|p| p.contains('2')));
        assert!(c.contains(&"rates".to_string()));
        assert!(c.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn repeated_phrase_is_first_pick() {
        let body = "interest rate interest rate interest rate";
        let e = StubEmbedder::new(32);
        let doc = e.embed(body).unwrap();
        let kws = extract_doc_keywords(body, &doc, &e, &KeywordConfig::default()).unwrap();
        // Candidates: "interest", "interest rate", "interest rate interest", "rate", ...
        assert!(!kws.is_empty());
        let phrases: Vec<_> = kws.iter().map(|k| k.phrase.as_str()).collect();
        assert!(phrases.contains(&"interest rate"));
    }

    #[test]
    fn no_candidates_gives_empty_list() {
        let e = StubEmbedder::new(8);
        let doc = e.embed("the of").unwrap();
        assert!(extract_doc_keywords("the of 42", &doc, &e, &KeywordConfig::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn lambda_one_is_relevance_order() {
        let rel = [0.2, 0.9, 0.5, 0.9, 0.1];
        let picks = mmr_select(&rel, |_, _| 0.99, 5, 1.0);
        assert_eq!(picks, vec![1, 3, 2, 0, 4]);
    }

    #[test]
    fn mmr_penalizes_redundancy() {
        // 0 and 1 near-duplicates; 2 distinct but less relevant.
        let rel = [0.9, 0.85, 0.6];
        let sim = |a: usize, b: usize| if a + b == 1 { 0.95 } else { 0.0 };
        assert_eq!(mmr_select(&rel, sim, 2, 0.5), vec![0, 2]);
    }

    #[test]
    fn topic_keywords_union_dedups() {
        let terms = |ts: &[&str]| -> Vec<WeightedTerm> {
            ts.iter().map(|t| WeightedTerm { term: (*t).into(), weight: 1.0 }).collect()
        };
        let model = TopicModel {
            dimension: 1,
            centroids: vec![vec![0.0], vec![1.0]],
            outlier_thresholds: vec![1.0, 1.0],
            keywords: vec![terms(&["market", "stock"]), terms(&["bond", "market"])],
            representative_sentences: vec![vec![], vec![]],
            names: vec!["a".into(), "b".into()],
        };
        let dt = |ids: &[u32]| DocumentTopics {
            doc_id: "d".into(),
            topic_ids: ids.iter().map(|&i| TopicId(i)).collect(),
        };
        assert_eq!(topic_keywords_for_doc(&dt(&[1]), &model).unwrap(), ["market", "stock"]);
        assert_eq!(
            topic_keywords_for_doc(&dt(&[1, 2]), &model).unwrap(),
            ["market", "stock", "bond"]
        );
        assert!(topic_keywords_for_doc(&dt(&[]), &model).unwrap().is_empty());
    }

    fn ten_candidates() -> Vec<KeywordCandidate> {
        (0..10).map(|i| cand(&alloc::format!("kw{i}"), 1.0 - i as f64 / 20.0)).collect()
    }

    #[test]
    fn clean_selection_keeps_completion_order() {
        let doc = ten_candidates();
        let chat = Script::new(vec!["kw9, kw8, kw7, kw6, kw5, kw4, kw3, kw2, kw1, kw0"]);
        let sel = select_keywords_llm("body", &doc, &[], &chat, &KeywordConfig::default());
        assert_eq!(sel, ["kw9", "kw8", "kw7", "kw6", "kw5", "kw4", "kw3", "kw2", "kw1", "kw0"]);
    }

    #[test]
    fn off_pool_terms_dropped_and_padded() {
        let doc = ten_candidates();
        let topic = vec!["market".to_string()];
        let chat = Script::new(vec!["1. blockchain\n2. KW3\n3. market\n- bitcoin"]);
        let sel = select_keywords_llm("body", &doc, &topic, &chat, &KeywordConfig::default());
        assert_eq!(sel.len(), 10);
        assert_eq!(&sel[..3], ["kw3", "market", "kw0"]);
        assert!(!sel.iter().any(|s| s == "blockchain" || s == "bitcoin"));
        let pool = keyword_pool(&doc, &topic);
        assert!(sel.iter().all(|s| pool.contains(s)));
    }

    #[test]
    fn small_pool_is_exhausted() {
        let doc: Vec<_> = ten_candidates().into_iter().take(6).collect();
        let chat = Script::new(vec!["kw1"]);
        let sel = select_keywords_llm("body", &doc, &[], &chat, &KeywordConfig::default());
        assert_eq!(sel.len(), 6);
    }

    #[test]
    fn backend_failure_falls_back_to_padding_order() {
        let doc = vec![cand("b", 0.1), cand("a", 0.9)];
        let chat = Script::new(Vec::<String>::new());
        let sel = select_keywords_llm("body", &doc, &["t".into()], &chat, &KeywordConfig::default());
        assert_eq!(sel, ["a", "b", "t"]);
    }

    #[test]
    fn selection_prompt_lists_pool() {
        let p = build_selection_prompt("Doc text", &["a b".into(), "c".into()], 10);
        assert!(p.contains("You may list up to 10 keywords"));
        assert!(p.contains("Document:\nDoc text\n"));
        assert!(p.contains("Candidate keyword set:\na b, c\n"));
        assert!(p.ends_with("Final Keywords:"));
    }

    proptest! {
        #[test]
        fn mmr_returns_distinct_subset(rel in proptest::collection::vec(-1.0f64..1.0, 0..10), top in 0usize..12, lambda in 0.0f64..=1.0) {
            let picks = mmr_select(&rel, |a, b| ((a * 7 + b * 7) % 10) as f64 / 10.0, top, lambda);
            prop_assert_eq!(picks.len(), top.min(rel.len()));
            let set: BTreeSet<_> = picks.iter().collect();
            prop_assert_eq!(set.len(), picks.len());
        }

        #[test]
        fn selected_always_within_pool(completion in "[a-z0-9 ,\n]{0,60}") {
            let doc = ten_candidates();
            let chat = Script::new(vec![completion]);
            let sel = select_keywords_llm("body", &doc, &["x".into()], &chat, &KeywordConfig::default());
            let pool = keyword_pool(&doc, &["x".into()]);
            prop_assert!(sel.len() <= 10);
            prop_assert!(sel.iter().all(|s| pool.contains(s)));
        }
    }
}
