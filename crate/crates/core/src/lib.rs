//! Core algorithms for topic-coverage document expansion.
//!
//! This crate is `no_std` and only needs `alloc`. Everything that touches
//! the filesystem, the network or a terminal lives in the `covex` crate.
//!
//! The pipeline, stage by stage:
//!
//! 1. [`text`] segments documents into sentences and analyzes text into terms.
//! 2. [`topics`] clusters sentence embeddings, derives per-topic c-TF-IDF
//!    keywords and representative sentences, and names topics through a
//!    chat model.
//! 3. [`keywords`] extracts document keywords with MMR, pools them with topic
//!    keywords and lets a chat model pick the final set.
//! 4. [`qgen`] generates batches of topic-covering queries.
//! 5. [`sparse`] indexes expanded documents with BM25; [`dense`] keeps separate
//!    document and query embedding indices and fuses their scores.
//! 6. [`eval`] computes MAP, nDCG@10, Recall@100, topic recall and Pearson
//!    correlation.
//!
//! Model access goes through the [`backend`] traits; [`stub`] has
//! deterministic implementations for hermetic runs.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod backend;
pub mod corpus;
pub mod dense;
pub mod error;
pub mod eval;
pub mod keywords;
pub mod qgen;
pub mod sparse;
pub mod stub;
pub mod text;
pub mod topics;
pub mod vector;

#[cfg(test)]
mod testutil;

pub use error::{BackendError, Error, Result};
