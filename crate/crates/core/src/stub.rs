//! Deterministic backends for hermetic runs.
//!
//! [`StubEmbedder`] maps every text to a pseudo-random unit vector seeded by
//! a stable hash of its bytes. [`HashingEmbedder`] hashes analyzed terms into
//! buckets, so texts sharing vocabulary get similar vectors. [`HeuristicChat`]
//! recognizes the pipeline's three prompt kinds and answers each from the
//! prompt's own content.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::backend::{ChatModel, ChatRequest, Embedder};
use crate::error::BackendError;
use crate::keywords::CANDIDATE_HEADER;
use crate::qgen::QGEN_TASK_MARKER;
use crate::text::{is_numeric, Analyzer};
use crate::topics::NAMING_INSTRUCTION;
use crate::vector::{normalize_f64, Embedding};

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Unit vector of `m` components drawn uniformly from `[-1, 1)` by a ChaCha8
/// generator seeded with the FNV-1a hash of `text`.
pub fn stub_embedding_of(text: &str, m: usize) -> Embedding {
    assert!(m > 0, "embedding dimension must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(text.as_bytes()));
    let raw: Vec<f64> = (0..m)
        .map(|_| f64::from(rng.next_u32()) / 4_294_967_296.0 * 2.0 - 1.0)
        .collect();
    unit(raw).unwrap_or_else(|| {
        let mut v = vec![0.0f32; m];
        v[0] = 1.0;
        Embedding::normalized(v).expect("basis vector is finite")
    })
}

fn unit(mut raw: Vec<f64>) -> Option<Embedding> {
    if normalize_f64(&mut raw) == 0.0 {
        return None;
    }
    Embedding::normalized(raw.into_iter().map(|x| x as f32).collect()).ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StubEmbedder {
    dimension: usize,
}

impl StubEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self { dimension }
    }
}

impl Embedder for StubEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>, BackendError> {
        Ok(texts.iter().map(|t| stub_embedding_of(t, self.dimension)).collect())
    }
}

/// Signed feature hashing of stemmed, stop-word-filtered terms. Texts with
/// no terms fall back to [`stub_embedding_of`].
#[derive(Debug, Clone, PartialEq)]
pub struct HashingEmbedder {
    dimension: usize,
    analyzer: Analyzer,
}

impl HashingEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self {
            dimension,
            analyzer: Analyzer::default(),
        }
    }

    fn embed_one(&self, text: &str) -> Embedding {
        let mut acc = vec![0.0f64; self.dimension];
        for term in self.analyzer.analyze(text) {
            let h = fnv1a(term.as_bytes());
            let bucket = (h % self.dimension as u64) as usize;
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            acc[bucket] += sign;
        }
        unit(acc).unwrap_or_else(|| stub_embedding_of(text, self.dimension))
    }
}

impl Embedder for HashingEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>, BackendError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

const QUERY_TEMPLATES: [&str; 6] = [
    "what is {}?",
    "how does {} work?",
    "why does {} matter?",
    "what are the effects of {}?",
    "how is {} measured?",
    "what causes {}?",
];

/// Rule-based chat model. Output depends only on the prompt and the request
/// seed; temperature is ignored.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct HeuristicChat;

impl HeuristicChat {
    fn name_topic(prompt: &str) -> String {
        let keywords = last_slot(prompt, "Keywords: ").unwrap_or_default();
        let words: Vec<String> = split_list(keywords).take(3).map(capitalize).collect();
        if words.is_empty() {
            String::from("topic: General")
        } else {
            format!("topic: {}", words.join(" "))
        }
    }

    fn select_keywords(prompt: &str) -> String {
        let target = number_after(prompt, "You may list up to ").unwrap_or(10);
        let pool = prompt
            .split_once(CANDIDATE_HEADER)
            .and_then(|(_, rest)| rest.trim_start_matches('\n').lines().next())
            .unwrap_or_default();
        split_list(pool).take(target).collect::<Vec<_>>().join(", ")
    }

    fn generate(prompt: &str, seed: u64) -> String {
        let Some((_, task)) = prompt.rsplit_once(QGEN_TASK_MARKER) else {
            return String::new();
        };
        let count = number_after(task, "Now generate ").unwrap_or(3);
        let passage = slot_text(task, "Passage: ");
        let keywords = last_slot(task, "Keywords: ").unwrap_or_default();

        let mut terms: Vec<String> = Vec::new();
        let mut seen = BTreeSet::new();
        let mut push = |t: String| {
            if !t.is_empty() && seen.insert(t.clone()) {
                terms.push(t);
            }
        };
        split_list(keywords).for_each(&mut push);
        let analyzer = Analyzer::unstemmed();
        analyzer
            .analyze(passage)
            .into_iter()
            .filter(|w| w.len() > 2 && !is_numeric(w))
            .for_each(&mut push);
        if terms.is_empty() {
            terms.push(String::from("this passage"));
        }

        let per_round = (QUERY_TEMPLATES.len() * terms.len()) as u64;
        (0..count as u64)
            .map(|k| {
                let n = seed * count as u64 + k;
                let template = QUERY_TEMPLATES[(n % QUERY_TEMPLATES.len() as u64) as usize];
                let term = &terms[((n / QUERY_TEMPLATES.len() as u64) % terms.len() as u64) as usize];
                let round = n / per_round;
                let q = template.replacen("{}", term, 1);
                if round == 0 {
                    format!("- {}", capitalize(q))
                } else {
                    format!("- {} (variant {round})", capitalize(q))
                }
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

impl ChatModel for HeuristicChat {
    fn chat(&self, request: &ChatRequest) -> Result<String, BackendError> {
        request.validate()?;
        let prompt = request.prompt.as_str();
        let out = if prompt.contains(NAMING_INSTRUCTION) {
            Self::name_topic(prompt)
        } else if prompt.contains(CANDIDATE_HEADER) {
            Self::select_keywords(prompt)
        } else if prompt.contains(QGEN_TASK_MARKER) {
            Self::generate(prompt, request.seed.unwrap_or(0))
        } else {
            String::new()
        };
        if out.trim().is_empty() {
            Err(BackendError::EmptyCompletion)
        } else {
            Ok(out)
        }
    }
}

fn capitalize(s: impl AsRef<str>) -> String {
    let s = s.as_ref();
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn split_list(s: &str) -> impl Iterator<Item = String> + '_ {
    s.split(',')
        .map(|p| p.trim().trim_matches('"').trim())
        .filter(|p| !p.is_empty())
        .map(String::from)
}

/// Rest of the last line starting with `label`.
fn last_slot<'a>(text: &'a str, label: &str) -> Option<&'a str> {
    text.lines()
        .rev()
        .find_map(|l| l.strip_prefix(label))
        .map(str::trim)
}

/// Text after the last `label` up to the next blank line.
fn slot_text<'a>(text: &'a str, label: &str) -> &'a str {
    match text.rsplit_once(label) {
        Some((_, rest)) => rest.split("\n\n").next().unwrap_or_default(),
        None => "",
    }
}

fn number_after(text: &str, label: &str) -> Option<usize> {
    let (_, rest) = text.split_once(label)?;
    let digits: String = rest.chars().take_while(char::is_ascii_digit).collect();
    digits.parse().ok()
}
