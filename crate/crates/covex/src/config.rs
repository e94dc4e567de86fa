//! Pipeline configuration.
//!
//! One TOML file describes a whole experiment. Every key is optional and
//! falls back to its default; `data/mini/pipeline.toml` in this crate lists
//! the commonly tuned ones. Values are layered in this order, later layers
//! winning:
//!
//! 1. the config file (or defaults when none is given),
//! 2. `COVEX_EMBEDDING_ENDPOINT`, `COVEX_EMBEDDING_MODEL`,
//!    `COVEX_CHAT_ENDPOINT` and `COVEX_CHAT_MODEL`,
//! 3. `--set section.key=value` overrides, where `value` is parsed as a TOML
//!    value and falls back to a plain string.
//!
//! Relative paths are resolved against the directory holding the config
//! file, or the working directory when there is none.

use std::path::{Path, PathBuf};
use std::time::Duration;

use covex_core::backend::{ChatModel, Embedder};
use covex_core::dense::FusionParams;
use covex_core::keywords::KeywordConfig;
use covex_core::qgen::{GenerationConfig, PromptMode};
use covex_core::sparse::Bm25Params;
use covex_core::stub::{HashingEmbedder, HeuristicChat, StubEmbedder};
use covex_core::topics::TopicConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio;
use crate::http::{HttpChat, HttpEmbedder, HttpSettings};
use crate::scripted::ScriptedChat;

/// Environment variables consulted for backend endpoints and model names.
pub const ENV_OVERRIDES: [(&str, &str); 4] = [
    ("COVEX_EMBEDDING_ENDPOINT", "embedding.endpoint"),
    ("COVEX_EMBEDDING_MODEL", "embedding.model_name"),
    ("COVEX_CHAT_ENDPOINT", "chat.endpoint"),
    ("COVEX_CHAT_MODEL", "chat.model_name"),
];

/// Deprecated or shorthand keys accepted alongside their canonical names.
const KEY_ALIASES: [(&str, &str); 1] = [("generation.m", "generation.num_queries")];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub dir: PathBuf,
    pub split: String,
    pub include_title: bool,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("data/mini"),
            split: "test".into(),
            include_title: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    #[default]
    Stub,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StubFlavor {
    /// Pseudo-random vector per distinct text.
    Random,
    /// Signed feature hashing of analyzed terms, so lexical overlap yields
    /// similar vectors.
    #[default]
    Hashing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingConfig {
    pub kind: EmbeddingKind,
    pub stub_flavor: StubFlavor,
    pub dimension: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_name: Option<String>,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub max_in_flight: usize,
    pub batch_size: usize,
    pub normalize: bool,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            kind: EmbeddingKind::Stub,
            stub_flavor: StubFlavor::Hashing,
            dimension: 64,
            endpoint: None,
            model_name: None,
            timeout_secs: 60.0,
            max_retries: 3,
            initial_backoff_ms: 500,
            max_in_flight: 8,
            batch_size: 64,
            normalize: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChatKind {
    #[default]
    Stub,
    Http,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChatConfig {
    pub kind: ChatKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_name: Option<String>,
    /// JSON array of completions, for the `scripted` kind.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub script: Option<PathBuf>,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub max_in_flight: usize,
}

impl Default for ChatConfig {
    fn default() -> Self {
        Self {
            kind: ChatKind::Stub,
            endpoint: None,
            model_name: None,
            script: None,
            timeout_secs: 120.0,
            max_retries: 3,
            initial_backoff_ms: 500,
            max_in_flight: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationSection {
    #[serde(flatten)]
    pub params: GenerationConfig,
    pub mode: PromptMode,
    /// Exemplar file; the built-in exemplars are used when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fewshot: Option<PathBuf>,
}

impl Default for GenerationSection {
    fn default() -> Self {
        Self {
            params: GenerationConfig::default(),
            mode: PromptMode::Full,
            fewshot: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Ranked depth written per query.
    pub depth: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { depth: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub output_dir: PathBuf,
    pub dataset: DatasetConfig,
    pub embedding: EmbeddingConfig,
    pub chat: ChatConfig,
    pub topics: TopicConfig,
    pub keywords: KeywordConfig,
    pub generation: GenerationSection,
    pub bm25: Bm25Params,
    pub fusion: FusionParams,
    pub search: SearchConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("out"),
            dataset: DatasetConfig::default(),
            embedding: EmbeddingConfig::default(),
            chat: ChatConfig::default(),
            topics: TopicConfig::default(),
            keywords: KeywordConfig::default(),
            generation: GenerationSection::default(),
            bm25: Bm25Params::default(),
            fusion: FusionParams::default(),
            search: SearchConfig::default(),
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

/// Parses a `--set` value as TOML, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(config_err(format!("bad key {key:?}")));
    }
    let (last, parents) = parts.split_last().expect("split yields at least one part");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| config_err(format!("{key}: {p} is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Dotted paths of every leaf in `table`.
fn leaf_keys(table: &toml::Table, prefix: &str, out: &mut Vec<String>) {
    for (k, v) in table {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            toml::Value::Table(t) => leaf_keys(t, &path, out),
            _ => out.push(path),
        }
    }
}

fn has_path(table: &toml::Table, path: &str) -> bool {
    let mut cur = table;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, p) in parts.iter().enumerate() {
        match cur.get(*p) {
            Some(toml::Value::Table(t)) if i + 1 < parts.len() => cur = t,
            Some(_) if i + 1 == parts.len() => return true,
            _ => return false,
        }
    }
    false
}

/// Rejects keys the schema does not know, so typos fail loudly.
fn check_unknown_keys(input: &toml::Table, parsed: &PipelineConfig) -> Result<()> {
    let canonical = toml::Table::try_from(parsed).map_err(config_err)?;
    let mut keys = Vec::new();
    leaf_keys(input, "", &mut keys);
    for key in keys {
        let key = KEY_ALIASES
            .iter()
            .find(|(alias, _)| *alias == key)
            .map_or(key.clone(), |(_, c)| c.to_string());
        if !has_path(&canonical, &key) {
            return Err(config_err(format!("unknown configuration key {key:?}")));
        }
    }
    Ok(())
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    /// Builds the effective configuration from an optional file, the
    /// environment and `key=value` overrides.
    pub fn load(path: Option<&Path>, overrides: &[String], env: impl Fn(&str) -> Option<String>) -> Result<Self> {
        let (mut table, base) = match path {
            Some(p) => {
                let text = fsio::read_string(p).map_err(|e| match e {
                    Error::MissingInput { path, .. } => config_err(format!("config file {} not found", path.display())),
                    other => other,
                })?;
                let table: toml::Table = text.parse().map_err(|e| config_err(format!("{}: {e}", p.display())))?;
                let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
                (table, base)
            }
            None => (toml::Table::new(), PathBuf::new()),
        };
        for (var, key) in ENV_OVERRIDES {
            if let Some(v) = env(var).filter(|v| !v.is_empty()) {
                set_path(&mut table, key, toml::Value::String(v))?;
            }
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| config_err(format!("--set expects key=value, got {o:?}")))?;
            set_path(&mut table, k.trim(), parse_value(v.trim()))?;
        }
        let mut config: PipelineConfig = table.clone().try_into().map_err(config_err)?;
        check_unknown_keys(&table, &config)?;
        let base = if base.as_os_str().is_empty() { PathBuf::from(".") } else { base };
        resolve(&base, &mut config.output_dir);
        resolve(&base, &mut config.dataset.dir);
        if let Some(p) = config.generation.fewshot.as_mut() {
            resolve(&base, p);
        }
        if let Some(p) = config.chat.script.as_mut() {
            resolve(&base, p);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.embedding;
        if e.dimension == 0 {
            return Err(config_err("embedding.dimension must be positive"));
        }
        if e.batch_size == 0 || e.max_in_flight == 0 {
            return Err(config_err("embedding.batch_size and embedding.max_in_flight must be positive"));
        }
        if e.kind == EmbeddingKind::Http && (e.endpoint.is_none() || e.model_name.is_none()) {
            return Err(config_err("http embedding backend needs embedding.endpoint and embedding.model_name"));
        }
        if e.timeout_secs.is_nan() || e.timeout_secs <= 0.0 || self.chat.timeout_secs.is_nan() || self.chat.timeout_secs <= 0.0 {
            return Err(config_err("timeouts must be positive"));
        }
        let c = &self.chat;
        if c.max_in_flight == 0 {
            return Err(config_err("chat.max_in_flight must be positive"));
        }
        match c.kind {
            ChatKind::Http if c.endpoint.is_none() || c.model_name.is_none() => {
                return Err(config_err("http chat backend needs chat.endpoint and chat.model_name"))
            }
            ChatKind::Scripted if c.script.is_none() => {
                return Err(config_err("scripted chat backend needs chat.script"))
            }
            _ => {}
        }
        if self.dataset.split.is_empty() {
            return Err(config_err("dataset.split must not be empty"));
        }
        if self.search.depth == 0 {
            return Err(config_err("search.depth must be positive"));
        }
        self.topics.validate().map_err(config_err)?;
        self.keywords.validate().map_err(config_err)?;
        self.generation.params.validate().map_err(config_err)?;
        self.bm25.validate().map_err(config_err)?;
        self.fusion.validate().map_err(config_err)?;
        Ok(())
    }

    /// The effective configuration as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }
}

fn settings(
    endpoint: &Option<String>,
    model: &Option<String>,
    timeout_secs: f64,
    max_retries: u32,
    backoff_ms: u64,
    max_in_flight: usize,
) -> HttpSettings {
    HttpSettings {
        endpoint: endpoint.clone().unwrap_or_default(),
        model_name: model.clone().unwrap_or_default(),
        timeout: Duration::from_secs_f64(timeout_secs),
        max_retries,
        initial_backoff: Duration::from_millis(backoff_ms),
        max_in_flight,
    }
}

pub fn build_embedder(config: &EmbeddingConfig) -> Result<Box<dyn Embedder>> {
    Ok(match (config.kind, config.stub_flavor) {
        (EmbeddingKind::Stub, StubFlavor::Random) => Box::new(StubEmbedder::new(config.dimension)),
        (EmbeddingKind::Stub, StubFlavor::Hashing) => Box::new(HashingEmbedder::new(config.dimension)),
        (EmbeddingKind::Http, _) => Box::new(HttpEmbedder::new(
            settings(
                &config.endpoint,
                &config.model_name,
                config.timeout_secs,
                config.max_retries,
                config.initial_backoff_ms,
                config.max_in_flight,
            ),
            config.dimension,
            config.batch_size,
            config.normalize,
        )?),
    })
}

pub fn build_chat(config: &ChatConfig) -> Result<Box<dyn ChatModel>> {
    Ok(match config.kind {
        ChatKind::Stub => Box::new(HeuristicChat),
        ChatKind::Scripted => Box::new(ScriptedChat::from_file(
            config.script.as_deref().ok_or_else(|| config_err("chat.script missing"))?,
        )?),
        ChatKind::Http => Box::new(HttpChat::new(settings(
            &config.endpoint,
            &config.model_name,
            config.timeout_secs,
            config.max_retries,
            config.initial_backoff_ms,
            config.max_in_flight,
        ))?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_env(_: &str) -> Option<String> {
        None
    }

    #[test]
    fn defaults_are_valid_and_round_trip() {
        let c = PipelineConfig::load(None, &[], no_env).unwrap();
        assert_eq!(c.generation.params.num_queries, 30);
        assert_eq!(c.bm25, Bm25Params { k1: 0.9, b: 0.4 });
        assert_eq!(c.search.depth, 1000);
        let back: PipelineConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn overrides_and_env() {
        let sets = vec![
            "fusion.alpha=0.25".to_string(),
            "generation.mode=F+K".to_string(),
            "generation.m=6".to_string(),
            "topics.min_cluster_size=3".to_string(),
        ];
        let env = |k: &str| (k == "COVEX_CHAT_MODEL").then(|| "llama".to_string());
        let c = PipelineConfig::load(None, &sets, env).unwrap();
        assert_eq!(c.fusion.alpha, 0.25);
        assert_eq!(c.generation.mode, PromptMode::FK);
        assert_eq!(c.generation.params.num_queries, 6);
        assert_eq!(c.topics.cluster.min_cluster_size, 3);
        assert_eq!(c.chat.model_name.as_deref(), Some("llama"));
    }

    #[test]
    fn file_paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("exp.toml");
        std::fs::write(&p, "output_dir = \"run1\"\n[dataset]\ndir = \"/abs/data\"\n").unwrap();
        let c = PipelineConfig::load(Some(&p), &[], no_env).unwrap();
        assert_eq!(c.output_dir, dir.path().join("run1"));
        assert_eq!(c.dataset.dir, PathBuf::from("/abs/data"));
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            "fusion.alpha=1.5",
            "generation.batch_size=0",
            "embedding.kind=http",
            "chat.kind=scripted",
            "bm25.k1=-1",
            "fusion.alpa=0.3",
            "keywords.lambda=2",
            "embedding.dimension=0",
        ];
        for b in bad {
            let err = PipelineConfig::load(None, &[b.to_string()], no_env).unwrap_err();
            assert_eq!(err.exit_code(), 1, "{b}: {err}");
        }
        let err = PipelineConfig::load(Some(Path::new("/nonexistent/x.toml")), &[], no_env).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn set_value_parsing() {
        assert_eq!(parse_value("3"), toml::Value::Integer(3));
        assert_eq!(parse_value("true"), toml::Value::Boolean(true));
        assert_eq!(parse_value("plain text"), toml::Value::String("plain text".into()));
        assert_eq!(parse_value("\"quoted\""), toml::Value::String("quoted".into()));
    }
}
