use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::porter::stem;
use super::stopwords::is_stopword;

/// Lowercased alphanumeric runs of `text`; everything else separates words.
pub fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| {
            let mut out = String::with_capacity(w.len());
            for c in w.chars() {
                out.extend(c.to_lowercase());
            }
            out
        })
}

pub fn is_numeric(word: &str) -> bool {
    word.chars().all(|c| c.is_numeric())
}

/// Term analysis used for indexing and for c-TF-IDF.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Analyzer {
    pub stem: bool,
    pub remove_stopwords: bool,
}

impl Default for Analyzer {
    fn default() -> Self {
        Self {
            stem: true,
            remove_stopwords: true,
        }
    }
}

impl Analyzer {
    pub fn unstemmed() -> Self {
        Self {
            stem: false,
            ..Self::default()
        }
    }

    pub fn analyze(&self, text: &str) -> Vec<String> {
        words(text)
            .filter(|w| !(self.remove_stopwords && is_stopword(w)))
            .map(|w| if self.stem { stem(&w) } else { w })
            .collect()
    }
}

/// Default analysis: lowercase, stop-words removed, Porter-stemmed.
pub fn tokenize(text: &str) -> Vec<String> {
    Analyzer::default().analyze(text)
}
