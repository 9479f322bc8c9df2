//! HTTP backends speaking the de facto standard chat-completions and
//! embeddings wire protocol.
//!
//! `POST {endpoint}/chat/completions` with a single user message, and
//! `POST {endpoint}/embeddings` with a batch of inputs. Transport errors and
//! 5xx/429 responses retry with exponential backoff; other statuses and
//! undecodable bodies fail immediately with the payload preserved for
//! debugging. A counting semaphore bounds in-flight requests per backend.
//! The API key is read from an environment variable (never from config
//! files) and attached as a bearer token.

use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::Deserialize;

use crate::error::{CoreError, Result};
use crate::gateway::{ChatBackend, ChatRequest, ChatResponse, EmbeddingProvider};
use crate::index::Embedding;

/// Environment variable the API key is read from.
pub const API_KEY_ENV: &str = "AWAKEN_API_KEY";

/// Backoff schedule for retryable failures.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            initial_delay_ms: 250,
            max_delay_ms: 4000,
        }
    }
}

impl RetryPolicy {
    fn delay(&self, attempt: u32) -> Duration {
        let ms = self
            .initial_delay_ms
            .saturating_mul(1u64 << attempt.min(16))
            .min(self.max_delay_ms);
        Duration::from_millis(ms)
    }
}

/// Connection settings shared by the chat and embedding clients.
#[derive(Debug, Clone)]
pub struct RemoteConfig {
    /// Base URL up to but excluding `/chat/completions` or `/embeddings`.
    pub endpoint: String,
    pub model: String,
    pub timeout: Duration,
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        RemoteConfig {
            endpoint: endpoint.into(),
            model: model.into(),
            timeout: Duration::from_secs(60),
            max_in_flight: 4,
            retry: RetryPolicy::default(),
        }
    }
}

/// Minimal counting semaphore; `acquire` returns a guard that releases on
/// drop.
struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Semaphore {
            permits: Mutex::new(permits.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut permits = self.permits.lock().expect("semaphore lock");
        while *permits == 0 {
            permits = self.cv.wait(permits).expect("semaphore wait");
        }
        *permits -= 1;
        SemaphoreGuard { sem: self }
    }
}

struct SemaphoreGuard<'a> {
    sem: &'a Semaphore,
}

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        let mut permits = self.sem.permits.lock().expect("semaphore lock");
        *permits += 1;
        self.sem.cv.notify_one();
    }
}

fn api_key() -> Option<String> {
    std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty())
}

fn is_retryable_status(status: reqwest::StatusCode) -> bool {
    status.is_server_error() || status == reqwest::StatusCode::TOO_MANY_REQUESTS
}

struct Transport {
    client: reqwest::blocking::Client,
    config: RemoteConfig,
    gate: Semaphore,
}

impl Transport {
    fn new(config: RemoteConfig) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| CoreError::Backend {
                msg: e.to_string(),
                retryable: false,
            })?;
        let gate = Semaphore::new(config.max_in_flight);
        Ok(Transport {
            client,
            config,
            gate,
        })
    }

    /// POSTs `body` to `{endpoint}{path}`, retrying transient failures.
    fn post(&self, path: &str, body: &serde_json::Value) -> Result<serde_json::Value> {
        let url = format!("{}{}", self.config.endpoint.trim_end_matches('/'), path);
        let mut attempt = 0u32;
        loop {
            let _slot = self.gate.acquire();
            let mut req = self.client.post(&url).json(body);
            if let Some(key) = api_key() {
                req = req.bearer_auth(key);
            }
            let outcome = req.send();
            drop(_slot);

            let retry_after =
                |msg: String, retryable: bool| -> std::result::Result<Duration, CoreError> {
                    if retryable && attempt < self.config.retry.max_retries {
                        let d = self.config.retry.delay(attempt);
                        log::warn!("request to {url} failed ({msg}); retrying in {d:?}");
                        Ok(d)
                    } else {
                        Err(CoreError::Backend { msg, retryable })
                    }
                };

            match outcome {
                Ok(resp) => {
                    let status = resp.status();
                    let text = resp.text().map_err(|e| CoreError::Backend {
                        msg: format!("reading body: {e}"),
                        retryable: true,
                    })?;
                    if status.is_success() {
                        return serde_json::from_str(&text).map_err(|_| CoreError::Decode {
                            payload: truncate(&text),
                        });
                    }
                    let d = retry_after(
                        format!("status {status}: {}", truncate(&text)),
                        is_retryable_status(status),
                    )?;
                    std::thread::sleep(d);
                }
                Err(e) => {
                    let d = retry_after(e.to_string(), true)?;
                    std::thread::sleep(d);
                }
            }
            attempt += 1;
        }
    }
}

fn truncate(s: &str) -> String {
    const LIMIT: usize = 500;
    if s.len() <= LIMIT {
        s.to_string()
    } else {
        let mut end = LIMIT;
        while !s.is_char_boundary(end) {
            end -= 1;
        }
        format!("{}...", &s[..end])
    }
}

/// Chat-completions client.
pub struct RemoteChatBackend {
    transport: Transport,
}

impl RemoteChatBackend {
    pub fn new(config: RemoteConfig) -> Result<Self> {
        Ok(RemoteChatBackend {
            transport: Transport::new(config)?,
        })
    }
}

#[derive(Deserialize)]
struct ChatCompletion {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: String,
}

impl ChatBackend for RemoteChatBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse> {
        let mut body = serde_json::json!({
            "model": self.transport.config.model,
            "messages": [{ "role": "user", "content": req.prompt }],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        if let Some(seed) = req.seed {
            body["seed"] = serde_json::json!(seed);
        }
        let started = Instant::now();
        let raw = self.transport.post("/chat/completions", &body)?;
        let decoded: ChatCompletion =
            serde_json::from_value(raw.clone()).map_err(|_| CoreError::Decode {
                payload: truncate(&raw.to_string()),
            })?;
        let text = decoded
            .choices
            .first()
            .map(|c| c.message.content.clone())
            .ok_or_else(|| CoreError::Decode {
                payload: truncate(&raw.to_string()),
            })?;
        Ok(ChatResponse {
            text,
            raw,
            latency: started.elapsed(),
        })
    }

    fn name(&self) -> &str {
        "remote-chat"
    }
}

/// Embeddings client. Vectors are validated against the declared dimension
/// and re-normalized on ingestion.
pub struct RemoteEmbedder {
    transport: Transport,
    dim: usize,
}

impl RemoteEmbedder {
    pub fn new(config: RemoteConfig, dim: usize) -> Result<Self> {
        Ok(RemoteEmbedder {
            transport: Transport::new(config)?,
            dim,
        })
    }
}

#[derive(Deserialize)]
struct EmbeddingsPayload {
    data: Vec<EmbeddingRow>,
}

#[derive(Deserialize)]
struct EmbeddingRow {
    embedding: Vec<f32>,
}

impl EmbeddingProvider for RemoteEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let body = serde_json::json!({
            "model": self.transport.config.model,
            "input": texts,
        });
        let raw = self.transport.post("/embeddings", &body)?;
        let decoded: EmbeddingsPayload =
            serde_json::from_value(raw.clone()).map_err(|_| CoreError::Decode {
                payload: truncate(&raw.to_string()),
            })?;
        if decoded.data.len() != texts.len() {
            return Err(CoreError::Decode {
                payload: format!(
                    "expected {} embeddings, got {}",
                    texts.len(),
                    decoded.data.len()
                ),
            });
        }
        decoded
            .data
            .into_iter()
            .map(|row| {
                if row.embedding.len() != self.dim {
                    return Err(CoreError::DimensionMismatch {
                        expected: self.dim,
                        got: row.embedding.len(),
                    });
                }
                Embedding::new(row.embedding)
            })
            .collect()
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn name(&self) -> &str {
        "remote-embed"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_grows_and_caps() {
        let p = RetryPolicy {
            max_retries: 5,
            initial_delay_ms: 100,
            max_delay_ms: 1000,
        };
        assert_eq!(p.delay(0), Duration::from_millis(100));
        assert_eq!(p.delay(1), Duration::from_millis(200));
        assert_eq!(p.delay(2), Duration::from_millis(400));
        assert_eq!(p.delay(4), Duration::from_millis(1000));
        assert_eq!(p.delay(16), Duration::from_millis(1000));
    }

    #[test]
    fn semaphore_bounds_concurrency() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        use std::sync::Arc;

        let sem = Arc::new(Semaphore::new(2));
        let live = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let mut handles = Vec::new();
        for _ in 0..8 {
            let sem = sem.clone();
            let live = live.clone();
            let peak = peak.clone();
            handles.push(std::thread::spawn(move || {
                let _g = sem.acquire();
                let now = live.fetch_add(1, Ordering::SeqCst) + 1;
                peak.fetch_max(now, Ordering::SeqCst);
                std::thread::sleep(Duration::from_millis(10));
                live.fetch_sub(1, Ordering::SeqCst);
            }));
        }
        for h in handles {
            h.join().unwrap();
        }
        assert!(peak.load(Ordering::SeqCst) <= 2, "semaphore leaked permits");
    }

    #[test]
    fn truncate_respects_char_boundaries() {
        let long = "é".repeat(600);
        let t = truncate(&long);
        assert!(t.ends_with("..."));
        assert!(t.len() <= 504);
    }
}
