//! Few-shot query generation in fixed-size batches.

use alloc::boxed::Box;
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::backend::{ChatModel, ChatRequest, DEFAULT_MAX_TOKENS};
use crate::error::{Error, Result};

/// Heading of the task block; the last occurrence in a prompt starts the
/// slots to fill.
pub const QGEN_TASK_MARKER: &str = "Your Task:";

/// Topics slot value for documents without any assigned topic.
pub const NO_TOPIC_SENTINEL: &str = "general content of the passage";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    /// Target number of queries per document.
    #[serde(alias = "m")]
    pub num_queries: usize,
    pub batch_size: usize,
    pub temperature: f64,
    /// Consecutive unparseable completions tolerated silently; beyond this a
    /// warning is logged. Every attempt counts toward the batch cap.
    pub max_parse_retries: u32,
    pub max_tokens: u32,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            num_queries: 30,
            batch_size: 3,
            temperature: 0.8,
            max_parse_retries: 2,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch_size must be at least 1".into()));
        }
        if self.num_queries < self.batch_size {
            return Err(Error::InvalidParameter(format!(
                "num_queries ({}) must be at least batch_size ({})",
                self.num_queries, self.batch_size
            )));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(Error::InvalidParameter("temperature must be non-negative".into()));
        }
        Ok(())
    }

    /// Hard limit on chat calls per document: four times the minimum.
    pub fn batch_cap(&self) -> usize {
        4 * self.num_queries.div_ceil(self.batch_size)
    }
}

/// Which conditioning slots the prompt carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PromptMode {
    /// Few-shot only.
    #[serde(rename = "F")]
    F,
    /// Few-shot plus keywords.
    #[serde(rename = "F+K")]
    FK,
    /// Few-shot plus topics and keywords.
    #[default]
    #[serde(rename = "full")]
    Full,
}

impl PromptMode {
    pub fn has_topics(self) -> bool {
        self == PromptMode::Full
    }

    pub fn has_keywords(self) -> bool {
        self != PromptMode::F
    }

    pub fn label(self) -> &'static str {
        match self {
            PromptMode::F => "F",
            PromptMode::FK => "F+K",
            PromptMode::Full => "full",
        }
    }
}

impl core::str::FromStr for PromptMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "f" => Ok(PromptMode::F),
            "f+k" | "fk" => Ok(PromptMode::FK),
            "full" => Ok(PromptMode::Full),
            other => Err(Error::InvalidParameter(format!("unknown prompt mode {other:?}"))),
        }
    }
}

/// One worked example. `topics` and `keywords` are rendered verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QgenExemplar {
    pub article: String,
    pub topics: String,
    pub keywords: String,
    pub queries: Vec<String>,
}

pub fn default_exemplars() -> Vec<QgenExemplar> {
    alloc::vec![QgenExemplar {
        article: String::from(
            "You have a good thing going. One of the luxuries of being invested in an index fund for the long term is that you don't have to sweat the inevitable short term dips in the market. Instead, look at the opportunity that presents itself on market dips: now your monthly investment is getting in at a lower price. Buy low, sell high. Don't lose money. These are common mantras for long term investment mentality. 5-8 years is plenty of time -- I'd call it medium-term. As you get closer to your goals (2-3 years out) you should start slowly moving money out of your index fund and start dollar cost averaging out into cash or short-term bonds (but that's another question). Keep putting money in, wait, and sell high. If it's not high, wait another year or two to buy the house. A lot of people do the opposite for their entire lives: buying high, panic selling on the dips, then buying again when it goes up. That's bad! I recommend a search on dollar cost averaging, which is exactly what you are doing right now with your monthly investments.",
        ),
        topics: String::from("Index-fund investing, Dollar-cost averaging, Investment horizon planning"),
        keywords: String::from(
            "index fund, long-term investment, market dips, \"buy low, sell high\", \"don't lose money\", medium-term horizon (5\u{2013}8 years), cash/short-term bonds, panic selling, monthly contributions, dollar cost averaging",
        ),
        queries: [
            "How does dollar cost averaging help with index fund investing during market dips?",
            "When should I transition from index funds to cash or short-term bonds for medium-term goals?",
            "What are the benefits of long-term investment strategy versus panic selling during market downturns?",
        ]
        .iter()
        .map(|s| String::from(*s))
        .collect(),
    }]
}

fn render_exemplar(out: &mut String, index: usize, ex: &QgenExemplar, mode: PromptMode) {
    out.push_str(&format!("Example {index}\n\n"));
    out.push_str(&format!("Article:\n{}\n\n", ex.article.trim()));
    if mode.has_topics() {
        out.push_str(&format!("Topics:\n{}\n\n", ex.topics.trim()));
    }
    if mode.has_keywords() {
        out.push_str(&format!("Keywords: {}\n\n", ex.keywords.trim()));
    }
    out.push_str("Generated Queries:\n");
    for q in &ex.queries {
        out.push_str(&format!("- {}\n", q.trim()));
    }
    out.push('\n');
}

/// Fills the few-shot generation template for one document.
pub fn build_prompt(
    body: &str,
    topic_names: &[String],
    keywords: &[String],
    exemplars: &[QgenExemplar],
    mode: PromptMode,
    batch_size: usize,
) -> String {
    let (purpose, task) = match mode {
        PromptMode::Full => (
            " that cover specified topics and make use of given keywords",
            " that collectively cover specified topics by using given keywords",
        ),
        PromptMode::FK => (" that make use of given keywords", " by using given keywords"),
        PromptMode::F => ("", ""),
    };
    let mut p = format!(
        "You are an expert assistant in crafting search queries for a given passage{purpose}. The following are some examples:\n\n"
    );
    for (i, ex) in exemplars.iter().enumerate() {
        render_exemplar(&mut p, i + 1, ex, mode);
    }
    p.push_str(QGEN_TASK_MARKER);
    p.push_str("\n\n");
    p.push_str(&format!(
        "Now generate {batch_size} relevant queries for this passage{task}:\n\n"
    ));
    p.push_str(&format!("Passage: {}\n\n", body.trim()));
    if mode.has_topics() {
        let topics = if topic_names.is_empty() {
            String::from(NO_TOPIC_SENTINEL)
        } else {
            topic_names.join(", ")
        };
        p.push_str(&format!("Topics: {topics}\n\n"));
    }
    if mode.has_keywords() {
        p.push_str(&format!("Keywords: {}\n\n", keywords.join(", ")));
    }
    p.push_str("Queries:");
    p
}

fn strip_list_marker(line: &str) -> Option<&str> {
    if let Some(rest) = line
        .strip_prefix("- ")
        .or_else(|| line.strip_prefix("* "))
        .or_else(|| line.strip_prefix("\u{2022} "))
    {
        return Some(rest);
    }
    let digits = line.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 {
        let rest = &line[digits..];
        if let Some(r) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            return Some(r);
        }
    }
    None
}

/// Query-shaped lines of a completion: list items (bullets or numbers) and
/// bare lines ending in `?`, markers and surrounding quotes stripped. At most
/// `expected` are returned.
pub fn parse_queries(completion: &str, expected: usize) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for raw in completion.lines() {
        if out.len() >= expected {
            break;
        }
        let line = raw.trim();
        let item = match strip_list_marker(line) {
            Some(rest) => rest,
            None if line.ends_with('?') => line,
            None => continue,
        };
        let item = item.trim().trim_matches('"').trim();
        if !item.is_empty() {
            out.push(String::from(item));
        }
    }
    if out.is_empty() {
        Err(Error::NoQueriesParsed)
    } else {
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub doc_id: String,
    pub queries: Vec<String>,
    pub topics_used: Vec<String>,
    pub keywords_used: Vec<String>,
    pub batches_issued: u32,
}

/// Everything one document's generation needs besides the model.
#[derive(Debug, Clone, Copy)]
pub struct GenerationInput<'a> {
    pub doc_id: &'a str,
    pub body: &'a str,
    pub topic_names: &'a [String],
    pub keywords: &'a [String],
}

/// Issues batches of `batch_size` queries with an identical prompt until
/// `num_queries` distinct queries (case-insensitive) accumulate or the batch
/// cap is reached. Batch `i` is requested with seed `i`.
pub fn generate_queries(
    input: GenerationInput<'_>,
    config: &GenerationConfig,
    mode: PromptMode,
    exemplars: &[QgenExemplar],
    chat: &dyn ChatModel,
) -> Result<GenerationRecord> {
    config.validate()?;
    let prompt = build_prompt(
        input.body,
        input.topic_names,
        input.keywords,
        exemplars,
        mode,
        config.batch_size,
    );
    let mut record = GenerationRecord {
        doc_id: String::from(input.doc_id),
        queries: Vec::with_capacity(config.num_queries),
        topics_used: if mode.has_topics() { input.topic_names.to_vec() } else { Vec::new() },
        keywords_used: if mode.has_keywords() { input.keywords.to_vec() } else { Vec::new() },
        batches_issued: 0,
    };
    let mut seen = BTreeSet::new();
    let mut consecutive_failures = 0u32;
    let cap = config.batch_cap();

    while record.queries.len() < config.num_queries && (record.batches_issued as usize) < cap {
        let mut request = ChatRequest::new(prompt.clone(), config.temperature)
            .with_seed(u64::from(record.batches_issued));
        request.max_tokens = config.max_tokens;
        record.batches_issued += 1;
        let completion = match chat.chat(&request) {
            Ok(c) => c,
            Err(source) => {
                return Err(Error::Generation {
                    partial: Box::new(record),
                    source,
                })
            }
        };
        match parse_queries(&completion, config.batch_size) {
            Ok(batch) => {
                consecutive_failures = 0;
                for q in batch {
                    if record.queries.len() < config.num_queries && seen.insert(q.to_lowercase()) {
                        record.queries.push(q);
                    }
                }
            }
            Err(_) => {
                consecutive_failures += 1;
                if consecutive_failures == config.max_parse_retries + 1 {
                    log::warn!(
                        "{}: {consecutive_failures} consecutive unparseable completions",
                        input.doc_id
                    );
                }
            }
        }
    }
    if record.queries.len() < config.num_queries {
        log::warn!(
            "{}: only {} of {} queries after {} batches",
            input.doc_id,
            record.queries.len(),
            config.num_queries,
            record.batches_issued
        );
    }
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::BackendError;
    use crate::testutil::Script;
    use alloc::string::ToString;
    use alloc::vec;
    use proptest::prelude::*;

    fn input<'a>(topics: &'a [String], keywords: &'a [String]) -> GenerationInput<'a> {
        GenerationInput {
            doc_id: "d1",
            body: "Some passage.",
            topic_names: topics,
            keywords,
        }
    }

    fn batch(i: usize) -> String {
        format!("- Q{}?\n- Q{}?\n- Q{}?", 3 * i, 3 * i + 1, 3 * i + 2)
    }

    #[test]
    fn parses_bullets_and_numbers() {
        assert_eq!(parse_queries("- Q1?\n- Q2?\n- Q3?", 3).unwrap(), ["Q1?", "Q2?", "Q3?"]);
        assert_eq!(parse_queries("1. Q1?\n2. Q2?", 3).unwrap(), ["Q1?", "Q2?"]);
        assert_eq!(
            parse_queries("Here are some:\n1) \"A?\"\nWhy B?\n* C", 5).unwrap(),
            ["A?", "Why B?", "C"]
        );
        assert!(matches!(
            parse_queries("I cannot help with that.", 3),
            Err(Error::NoQueriesParsed)
        ));
        assert_eq!(parse_queries("- a\n- b\n- c\n- d", 3).unwrap().len(), 3);
    }

    #[test]
    fn ten_clean_batches_give_thirty_queries() {
        let chat = Script::new((0..10).map(batch).collect());
        let r = generate_queries(input(&[], &[]), &GenerationConfig::default(), PromptMode::Full, &default_exemplars(), &chat)
            .unwrap();
        assert_eq!(r.queries.len(), 30);
        assert_eq!(r.batches_issued, 10);
        assert_eq!(chat.calls(), 10);
        let seeds: Vec<_> = chat.seen.lock().unwrap().iter().map(|r| r.seed).collect();
        assert_eq!(seeds, (0..10).map(Some).collect::<Vec<_>>());
    }

    #[test]
    fn duplicate_triggers_refill_batch() {
        let mut script: Vec<String> = (0..10).map(batch).collect();
        script[1] = String::from("- q0?\n- Q4?\n- Q5?");
        script.push(String::from("- Extra?\n- Extra2?\n- Extra3?"));
        let chat = Script::new(script);
        let r = generate_queries(input(&[], &[]), &GenerationConfig::default(), PromptMode::Full, &default_exemplars(), &chat)
            .unwrap();
        assert_eq!(r.queries.len(), 30);
        assert_eq!(r.batches_issued, 11);
        assert_eq!(r.queries.last().unwrap(), "Extra?");
    }

    #[test]
    fn unparseable_output_stops_at_cap() {
        let chat = Script::new(vec!["I cannot help with that."; 100]);
        let r = generate_queries(input(&[], &[]), &GenerationConfig::default(), PromptMode::Full, &default_exemplars(), &chat)
            .unwrap();
        assert!(r.queries.is_empty());
        assert_eq!(r.batches_issued, 40);
    }

    #[test]
    fn backend_failure_carries_partial_results() {
        let chat = Script::new(vec![batch(0), batch(1)]);
        match generate_queries(input(&[], &[]), &GenerationConfig::default(), PromptMode::Full, &default_exemplars(), &chat) {
            Err(Error::Generation { partial, source }) => {
                assert_eq!(partial.queries.len(), 6);
                assert_eq!(partial.batches_issued, 3);
                assert_eq!(source, BackendError::ScriptExhausted);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let chat = Script::new(Vec::<String>::new());
        let config = GenerationConfig { num_queries: 2, ..Default::default() };
        assert!(matches!(
            generate_queries(input(&[], &[]), &config, PromptMode::Full, &[], &chat),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn empty_topics_use_sentinel() {
        let p = build_prompt("B", &[], &["k".to_string()], &default_exemplars(), PromptMode::Full, 3);
        assert!(p.contains("Topics: general content of the passage\n"));
    }

    #[test]
    fn prompt_contains_every_topic_and_keyword() {
        let topics: Vec<String> = (0..3).map(|i| format!("Topic Name {i}")).collect();
        let keywords: Vec<String> = (0..10).map(|i| format!("keyword phrase {i}")).collect();
        let p = build_prompt("Body text.", &topics, &keywords, &default_exemplars(), PromptMode::Full, 3);
        for s in topics.iter().chain(&keywords) {
            assert!(p.contains(s.as_str()), "{s}");
        }
        assert!(p.contains("Topics: Topic Name 0, Topic Name 1, Topic Name 2\n"));
        assert!(p.ends_with("Queries:"));
    }

    #[test]
    fn index_fund_exemplar_is_reproduced() {
        let p = build_prompt("B", &[], &[], &default_exemplars(), PromptMode::Full, 3);
        assert!(p.starts_with(
            "You are an expert assistant in crafting search queries for a given passage that cover specified topics and make use of given keywords. The following are some examples:\n\nExample 1\n\nArticle:\nYou have a good thing going."
        ));
        assert!(p.contains("Topics:\nIndex-fund investing, Dollar-cost averaging, Investment horizon planning\n"));
        assert!(p.contains("Keywords: index fund, long-term investment, market dips, \"buy low, sell high\", \"don't lose money\", medium-term horizon (5\u{2013}8 years), cash/short-term bonds, panic selling, monthly contributions, dollar cost averaging\n"));
        assert!(p.contains(
            "Generated Queries:\n- How does dollar cost averaging help with index fund investing during market dips?\n- When should I transition from index funds to cash or short-term bonds for medium-term goals?\n- What are the benefits of long-term investment strategy versus panic selling during market downturns?\n"
        ));
        assert!(p.contains("with your monthly investments.\n\n"));
        assert!(p.contains(
            "Now generate 3 relevant queries for this passage that collectively cover specified topics by using given keywords:\n\nPassage: B\n\n"
        ));
    }

    #[test]
    fn ablation_modes_control_slots() {
        let t = ["T".to_string()];
        let k = ["K".to_string()];
        let f = build_prompt("B", &t, &k, &default_exemplars(), PromptMode::F, 3);
        assert!(!f.contains("Topics:") && !f.contains("Keywords:"));
        let fk = build_prompt("B", &t, &k, &default_exemplars(), PromptMode::FK, 3);
        assert!(!fk.contains("Topics:") && fk.contains("Keywords: K\n"));
        let full = build_prompt("B", &t, &k, &default_exemplars(), PromptMode::Full, 3);
        assert!(full.contains("Topics: T\n") && full.contains("Keywords: K\n"));
        assert_eq!("f+k".parse::<PromptMode>().unwrap(), PromptMode::FK);
    }

    proptest! {
        #[test]
        fn queries_distinct_and_batches_capped(
            completions in proptest::collection::vec(
                proptest::collection::vec("[a-cA-C]{1,2}\\?", 0..4),
                0..60,
            ),
            m in 3usize..12,
        ) {
            let script: Vec<String> = completions
                .iter()
                .map(|qs| qs.iter().map(|q| format!("- {q}")).collect::<Vec<_>>().join("\n"))
                .collect();
            let chat = Script::new(script);
            let config = GenerationConfig { num_queries: m, ..Default::default() };
            let record = match generate_queries(input(&[], &[]), &config, PromptMode::Full, &[], &chat) {
                Ok(r) => r,
                Err(Error::Generation { partial, .. }) => *partial,
                Err(e) => return Err(TestCaseError::fail(format!("{e}"))),
            };
            prop_assert!(record.batches_issued as usize <= config.batch_cap());
            prop_assert!(record.queries.len() <= m);
            let lower: BTreeSet<_> = record.queries.iter().map(|q| q.to_lowercase()).collect();
            prop_assert_eq!(lower.len(), record.queries.len());
        }
    }
}
