//! Completion backends.
//!
//! One trait, [`CompletionBackend`], fronts three implementations: an
//! OpenAI-compatible HTTP client with retry ([`http::HttpBackend`]), a
//! deterministic scripted backend for tests ([`scripted::ScriptedBackend`]),
//! and a disk-cache wrapper ([`cache::CachedBackend`]) that makes
//! interrupted runs resumable without re-billing.

mod cache;
mod http;
mod scripted;

pub use cache::{CacheKey, CachedBackend, DiskCache};
pub use http::{HttpBackend, HttpBackendConfig, RetryPolicy};
pub use scripted::{FnBackend, PromptMatcher, ScriptEntry, ScriptedBackend};

use async_trait::async_trait;
use futures::stream::{self, StreamExt};
use thiserror::Error;
use tokio::sync::Semaphore;

/// Upper bound accepted for `max_tokens`; chat APIs reject anything near
/// this anyway.
pub const MAX_TOKENS_LIMIT: u32 = 131_072;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("retries exhausted after {attempts} attempts: {last}")]
    RateLimitExhausted { attempts: u32, last: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("no scripted response matches prompt: {0}")]
    ScriptMiss(String),
    #[error("scripting error: {0}")]
    Script(String),
    #[error("api error (status {status}): {message}")]
    Api { status: u16, message: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("cache error: {0}")]
    Cache(String),
    #[error("invalid decode params: {0}")]
    InvalidParams(String),
}

/// Decoding parameters for one completion request.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DecodeParams {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<i64>,
}

impl DecodeParams {
    pub fn new(model: impl Into<String>, temperature: f64, max_tokens: u32) -> Self {
        DecodeParams {
            model: model.into(),
            temperature,
            max_tokens,
            seed: None,
        }
    }

    pub fn with_seed(mut self, seed: i64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(BackendError::InvalidParams(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_tokens == 0 || self.max_tokens > MAX_TOKENS_LIMIT {
            return Err(BackendError::InvalidParams(format!(
                "max_tokens {} outside 1..={}",
                self.max_tokens, MAX_TOKENS_LIMIT
            )));
        }
        Ok(())
    }
}

/// A source of chat completions.
#[async_trait]
pub trait CompletionBackend: Send + Sync {
    /// Stable identifier mixed into cache keys and candidate metadata.
    fn id(&self) -> &str;

    /// Returns the assistant message text for `prompt`.
    ///
    /// `attempt` distinguishes repeated samples of the same prompt and
    /// params (it is the attempt_index of the cache key); callers that
    /// sample k times pass 0..k.
    async fn complete(
        &self,
        prompt: &str,
        params: &DecodeParams,
        attempt: u32,
    ) -> Result<String, BackendError>;
}

/// Completes a batch of prompts with at most `parallelism` requests in
/// flight. Results are positionally aligned with the inputs and per-item
/// failures never abort the rest; the item's slot carries the error.
/// Each item uses its position as the cache attempt index.
pub async fn complete_batch<B: CompletionBackend + ?Sized>(
    backend: &B,
    prompts: &[String],
    params: &DecodeParams,
    parallelism: usize,
) -> Vec<Result<String, BackendError>> {
    let width = parallelism.max(1);
    stream::iter(prompts.iter().enumerate())
        .map(|(i, prompt)| backend.complete(prompt, params, i as u32))
        .buffered(width)
        .collect()
        .await
}

/// Wraps a backend with a global in-flight cap, bounding total backend
/// parallelism independently of how many workers fan out requests.
pub struct Throttled<B> {
    inner: B,
    permits: Semaphore,
}

impl<B> Throttled<B> {
    pub fn new(inner: B, max_in_flight: usize) -> Self {
        Throttled {
            inner,
            permits: Semaphore::new(max_in_flight.max(1)),
        }
    }
}

#[async_trait]
impl<B: CompletionBackend> CompletionBackend for Throttled<B> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    async fn complete(
        &self,
        prompt: &str,
        params: &DecodeParams,
        attempt: u32,
    ) -> Result<String, BackendError> {
        let _permit = self.permits.acquire().await.expect("semaphore closed");
        self.inner.complete(prompt, params, attempt).await
    }
}

#[async_trait]
impl<B: CompletionBackend + ?Sized> CompletionBackend for std::sync::Arc<B> {
    fn id(&self) -> &str {
        (**self).id()
    }

    async fn complete(
        &self,
        prompt: &str,
        params: &DecodeParams,
        attempt: u32,
    ) -> Result<String, BackendError> {
        (**self).complete(prompt, params, attempt).await
    }
}
