//! Std companion to `covex-core`: dataset and artifact file formats, index
//! snapshots, HTTP model backends, configuration and the pipeline stages
//! driven by the `covex` binary.

pub mod beir;
pub mod cli;
pub mod config;
pub mod error;
pub mod fewshot;
pub mod fsio;
pub mod http;
pub mod pipeline;
pub mod scripted;
pub mod snapshot;
pub mod trec;

pub use error::{Error, Result};
