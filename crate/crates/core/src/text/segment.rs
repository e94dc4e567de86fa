//! Rule-based sentence segmentation.
//!
//! A sentence ends at a run of `.`, `!` or `?` (plus any closing quotes or
//! brackets) that is followed by whitespace and then an uppercase letter or a
//! digit, optionally behind an opening quote or bracket. A single `.` closing
//! a protected abbreviation never ends a sentence. Decimal points are never
//! followed by whitespace, so numbers are not split.

use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::corpus::Document;

const ABBREVIATIONS: &[&str] = &[
    "al.", "approx.", "cf.", "co.", "corp.", "dept.", "dr.", "e.g.", "eq.", "est.", "etc.",
    "fig.", "figs.", "i.e.", "inc.", "jr.", "ltd.", "mr.", "mrs.", "ms.", "no.", "prof.", "sr.",
    "st.", "u.k.", "u.s.", "vol.", "vs.",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    /// Byte offset of the first character in the source text.
    pub start: usize,
    /// Byte offset one past the last character.
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceSet {
    pub doc_id: String,
    pub sentences: Vec<Sentence>,
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '\u{201d}' | '\u{2019}' | '\u{bb}')
}

fn is_opener(c: char) -> bool {
    matches!(c, '"' | '\'' | '(' | '[' | '\u{201c}' | '\u{2018}' | '\u{ab}')
}

fn starts_sentence(c: char) -> bool {
    c.is_uppercase() || c.is_ascii_digit()
}

fn is_protected(text: &str, word_start: usize, dot_end: usize) -> bool {
    let word = text[word_start..dot_end].trim_start_matches(is_opener);
    let mut lower = String::with_capacity(word.len());
    for c in word.chars() {
        lower.extend(c.to_lowercase());
    }
    ABBREVIATIONS.binary_search(&lower.as_str()).is_ok()
}

/// Byte ranges of the sentences in `text`. Whitespace-only input has none.
pub fn segment(text: &str) -> Vec<Range<usize>> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let n = chars.len();
    let byte_end = |i: usize| chars[i].0 + chars[i].1.len_utf8();

    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    // Start of the whitespace-delimited word under the cursor.
    let mut word_start = 0usize;
    let mut i = 0usize;
    while i < n {
        let (pos, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if i == 0 || chars[i - 1].1.is_whitespace() {
            word_start = pos;
        }
        if start.is_none() {
            start = Some(pos);
        }
        if !is_terminator(c) {
            i += 1;
            continue;
        }

        let mut j = i;
        while j + 1 < n && is_terminator(chars[j + 1].1) {
            j += 1;
        }
        let single_dot = j == i && c == '.';
        while j + 1 < n && is_closer(chars[j + 1].1) {
            j += 1;
        }
        let end = byte_end(j);

        let mut k = j + 1;
        if k < n && chars[k].1.is_whitespace() {
            while k < n && chars[k].1.is_whitespace() {
                k += 1;
            }
            let mut m = k;
            if m < n && is_opener(chars[m].1) {
                m += 1;
            }
            let next_starts = m < n && starts_sentence(chars[m].1);
            let protected = single_dot && is_protected(text, word_start, byte_end(i));
            if next_starts && !protected {
                if let Some(s) = start.take() {
                    spans.push(s..end);
                }
                i = k;
                continue;
            }
        }
        i = j + 1;
    }
    if let Some(s) = start {
        let end = s + text[s..].trim_end().len();
        spans.push(s..end);
    }
    spans
}

/// Segments a document's body text (the title is not part of the offsets).
pub fn segment_sentences(doc: &Document) -> SentenceSet {
    let sentences = segment(&doc.text)
        .into_iter()
        .map(|r| Sentence {
            text: String::from(&doc.text[r.clone()]),
            start: r.start,
            end: r.end,
        })
        .collect();
    SentenceSet {
        doc_id: doc.doc_id.clone(),
        sentences,
    }
}
