//! Model access layer: chat completions and text embeddings.
//!
//! Everything above this module talks to two object-safe traits,
//! [`ChatBackend`] and [`EmbeddingProvider`]. Three families implement them:
//!
//! * scripted backends replaying canned responses from a rules file
//!   (deterministic test and fixture runs),
//! * a hash-based mock embedder (deterministic, no network),
//! * remote clients speaking the de facto standard chat-completions and
//!   embeddings wire protocol over HTTP.
//!
//! Remote access is bounded: at most `max_in_flight` requests are in flight
//! per backend, transient failures retry with exponential backoff, and the
//! API key only ever enters through an environment variable.

mod mock_embed;
mod remote;
mod scripted;

pub use mock_embed::MockEmbedder;
pub use remote::{RemoteChatBackend, RemoteConfig, RemoteEmbedder, RetryPolicy, API_KEY_ENV};
pub use scripted::{load_rules, ScriptRule, ScriptedBackend};

use rand::Rng;

use crate::error::{CoreError, Result};
use crate::index::Embedding;

/// Default completion budget per request.
pub const DEFAULT_MAX_TOKENS: u32 = 256;

/// One chat completion request.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
}

impl ChatRequest {
    pub fn new(prompt: impl Into<String>, temperature: f64) -> Result<Self> {
        let prompt = prompt.into();
        if prompt.is_empty() {
            return Err(CoreError::Invalid("prompt must be non-empty".into()));
        }
        if !(0.0..=2.0).contains(&temperature) {
            return Err(CoreError::Invalid(format!(
                "temperature must be in [0, 2], got {temperature}"
            )));
        }
        Ok(ChatRequest {
            prompt,
            temperature,
            max_tokens: DEFAULT_MAX_TOKENS,
            seed: None,
        })
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }
}

/// A decoded completion plus the untouched payload it came from.
#[derive(Debug, Clone)]
pub struct ChatResponse {
    pub text: String,
    pub raw: serde_json::Value,
    pub latency: std::time::Duration,
}

/// Anything that can answer a single-prompt chat request.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse>;

    /// Short human-readable tag for logs and run records.
    fn name(&self) -> &str;
}

/// Anything that can embed a batch of texts into unit vectors.
pub trait EmbeddingProvider: Send + Sync {
    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>>;

    fn dimension(&self) -> usize;

    fn name(&self) -> &str;
}

/// Draws three sampling temperatures uniformly from `[0.1, 1.0]`, redrawing
/// until all three are pairwise distinct at three-decimal precision.
pub fn sample_temperatures(rng: &mut impl Rng) -> [f64; 3] {
    let mut picked: Vec<f64> = Vec::with_capacity(3);
    while picked.len() < 3 {
        let t: f64 = rng.gen_range(0.1..=1.0);
        let key = (t * 1000.0).round() as i64;
        if picked.iter().all(|p| (p * 1000.0).round() as i64 != key) {
            picked.push(t);
        }
    }
    [picked[0], picked[1], picked[2]]
}
