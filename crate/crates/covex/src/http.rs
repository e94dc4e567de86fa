//! HTTP backends for model servers exposing the OpenAI-compatible
//! `/v1/embeddings` and `/v1/chat/completions` endpoints.
//!
//! Timeouts, connection failures and 5xx responses are retried with
//! exponential backoff; any other non-success status fails at once. Each
//! client caps its concurrent requests at `max_in_flight`.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use covex_core::backend::{check_dimensions, ChatModel, ChatRequest, Embedder};
use covex_core::vector::Embedding;
use covex_core::BackendError;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub struct HttpSettings {
    /// Server base URL, with or without a trailing `/v1`.
    pub endpoint: String,
    pub model_name: String,
    pub timeout: Duration,
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub max_in_flight: usize,
}

impl HttpSettings {
    pub fn new(endpoint: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model_name: model_name.into(),
            timeout: Duration::from_secs(60),
            max_retries: 3,
            initial_backoff: Duration::from_millis(500),
            max_in_flight: 8,
        }
    }

    fn url(&self, path: &str) -> String {
        let base = self.endpoint.trim_end_matches('/');
        let base = base.strip_suffix("/v1").unwrap_or(base);
        format!("{base}/v1/{path}")
    }
}

/// Counting semaphore bounding concurrent requests.
struct Limiter {
    in_flight: Mutex<usize>,
    freed: Condvar,
    max: usize,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn new(max: usize) -> Self {
        Self {
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
            max: max.max(1),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.max {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.0.freed.notify_one();
    }
}

enum Attempt<T> {
    Done(T),
    Retry(BackendError),
    Fail(BackendError),
}

struct Client {
    http: reqwest::blocking::Client,
    settings: HttpSettings,
    limiter: Limiter,
}

impl Client {
    fn new(settings: HttpSettings) -> Result<Self, BackendError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(settings.timeout)
            .build()
            .map_err(|e| BackendError::InvalidRequest(format!("cannot build HTTP client: {e}")))?;
        Ok(Self {
            http,
            limiter: Limiter::new(settings.max_in_flight),
            settings,
        })
    }

    fn attempt<B: Serialize, R: DeserializeOwned>(&self, url: &str, body: &B, attempts: u32) -> Attempt<R> {
        let _permit = self.limiter.acquire();
        let response = match self.http.post(url).json(body).send() {
            Ok(r) => r,
            Err(e) if e.is_timeout() => return Attempt::Retry(BackendError::Timeout { attempts }),
            Err(e) => {
                return Attempt::Retry(BackendError::Unreachable {
                    attempts,
                    message: e.to_string(),
                })
            }
        };
        let status = response.status();
        let text = match response.text() {
            Ok(t) => t,
            Err(e) if e.is_timeout() => return Attempt::Retry(BackendError::Timeout { attempts }),
            Err(e) => {
                return Attempt::Retry(BackendError::Unreachable {
                    attempts,
                    message: e.to_string(),
                })
            }
        };
        if !status.is_success() {
            let err = BackendError::Status {
                status: status.as_u16(),
                body: text.chars().take(500).collect(),
            };
            return if status.is_server_error() {
                Attempt::Retry(err)
            } else {
                Attempt::Fail(err)
            };
        }
        match serde_json::from_str(&text) {
            Ok(v) => Attempt::Done(v),
            Err(e) => Attempt::Fail(BackendError::Malformed(e.to_string())),
        }
    }

    fn post<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<R, BackendError> {
        let url = self.settings.url(path);
        let mut backoff = self.settings.initial_backoff;
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&url, body, attempts) {
                Attempt::Done(v) => return Ok(v),
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(e) if attempts > self.settings.max_retries => return Err(e),
                Attempt::Retry(e) => {
                    log::warn!("{url}: attempt {attempts} failed ({e}); retrying in {backoff:?}");
                    std::thread::sleep(backoff);
                    backoff = backoff.saturating_mul(2);
                }
            }
        }
    }
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f64>,
}

/// Embedding client for `POST /v1/embeddings`.
pub struct HttpEmbedder {
    client: Client,
    dimension: usize,
    batch_size: usize,
    normalize: bool,
}

impl HttpEmbedder {
    pub fn new(settings: HttpSettings, dimension: usize, batch_size: usize, normalize: bool) -> Result<Self, BackendError> {
        if dimension == 0 {
            return Err(BackendError::InvalidRequest("dimension must be positive".into()));
        }
        Ok(Self {
            client: Client::new(settings)?,
            dimension,
            batch_size: batch_size.max(1),
            normalize,
        })
    }

    fn embed_chunk(&self, texts: &[&str]) -> Result<Vec<Embedding>, BackendError> {
        let response: EmbeddingResponse = self.client.post(
            "embeddings",
            &EmbeddingRequest {
                model: &self.client.settings.model_name,
                input: texts,
            },
        )?;
        if response.data.len() != texts.len() {
            return Err(BackendError::Malformed(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                response.data.len()
            )));
        }
        let mut data = response.data;
        if data.iter().all(|d| d.index.is_some()) {
            data.sort_by_key(|d| d.index);
            if data.iter().enumerate().any(|(i, d)| d.index != Some(i)) {
                return Err(BackendError::Malformed("embedding indices are not 0..n".into()));
            }
        }
        let vectors = data
            .into_iter()
            .map(|d| {
                let values: Vec<f32> = d.embedding.into_iter().map(|v| v as f32).collect();
                if self.normalize {
                    Embedding::normalized(values)
                } else {
                    Embedding::new(values)
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        check_dimensions(self.dimension, &vectors)?;
        Ok(vectors)
    }
}

impl Embedder for HttpEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>, BackendError> {
        if texts.iter().any(|t| t.trim().is_empty()) {
            return Err(BackendError::InvalidRequest("empty text in embedding batch".into()));
        }
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.batch_size) {
            out.extend(self.embed_chunk(chunk)?);
        }
        Ok(out)
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatBody<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReply,
}

#[derive(Deserialize)]
struct ChatReply {
    #[serde(default)]
    content: Option<String>,
}

/// Chat client for `POST /v1/chat/completions`.
pub struct HttpChat {
    client: Client,
}

impl HttpChat {
    pub fn new(settings: HttpSettings) -> Result<Self, BackendError> {
        Ok(Self {
            client: Client::new(settings)?,
        })
    }
}

impl ChatModel for HttpChat {
    fn chat(&self, request: &ChatRequest) -> Result<String, BackendError> {
        request.validate()?;
        let body = ChatBody {
            model: &self.client.settings.model_name,
            messages: [ChatMessage {
                role: "user",
                content: &request.prompt,
            }],
            temperature: request.temperature,
            max_tokens: request.max_tokens,
            seed: request.seed,
        };
        let response: ChatResponse = self.client.post("chat/completions", &body)?;
        let text = response
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .unwrap_or_default();
        let text = text.trim_end();
        if text.is_empty() {
            return Err(BackendError::EmptyCompletion);
        }
        Ok(text.to_string())
    }
}
