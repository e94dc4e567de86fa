//! Sentence segmentation and term analysis.

mod analyze;
mod porter;
mod segment;
mod stopwords;

pub use analyze::{is_numeric, tokenize, words, Analyzer};
pub use porter::stem;
pub use segment::{segment, segment_sentences, Sentence, SentenceSet};
pub use stopwords::{is_stopword, STOPWORDS};
