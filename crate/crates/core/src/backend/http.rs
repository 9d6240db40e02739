//! OpenAI-compatible chat completions client.
//!
//! Targets any server exposing `POST /v1/chat/completions`, so local
//! OpenAI-compatible hosts for open models work the same as the hosted
//! APIs. Transient failures (429, 5xx, timeouts) are retried with
//! exponentially growing, fully jittered backoff.

use std::time::Duration;

use rand::Rng;
use serde::Deserialize;
use serde_json::json;

use super::{BackendError, CompletionBackend, DecodeParams};

/// Retry schedule for transient failures.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_secs(1),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    /// Full-jitter delay before retry number `attempt` (0-based): uniform
    /// in [0, min(max_delay, base_delay * 2^attempt)].
    fn delay(&self, attempt: u32) -> Duration {
        let ceiling = self
            .base_delay
            .saturating_mul(2u32.saturating_pow(attempt))
            .min(self.max_delay);
        rand::thread_rng().gen_range(Duration::ZERO..=ceiling)
    }
}

#[derive(Debug, Clone)]
pub struct HttpBackendConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    /// Identifier mixed into cache keys; defaults to the base URL.
    pub id: Option<String>,
    pub retry: RetryPolicy,
    pub request_timeout: Duration,
}

impl HttpBackendConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        HttpBackendConfig {
            base_url: base_url.into(),
            api_key: None,
            id: None,
            retry: RetryPolicy::default(),
            request_timeout: Duration::from_secs(120),
        }
    }
}

pub struct HttpBackend {
    id: String,
    endpoint: String,
    api_key: Option<String>,
    retry: RetryPolicy,
    client: reqwest::Client,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self, BackendError> {
        let trimmed = config.base_url.trim_end_matches('/');
        let root = trimmed.strip_suffix("/v1").unwrap_or(trimmed);
        let endpoint = format!("{root}/v1/chat/completions");
        let client = reqwest::Client::builder()
            .timeout(config.request_timeout)
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(HttpBackend {
            id: config.id.unwrap_or_else(|| format!("http:{root}")),
            endpoint,
            api_key: config.api_key,
            retry: config.retry,
            client,
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    async fn send_once(
        &self,
        prompt: &str,
        params: &DecodeParams,
    ) -> Result<String, SendFailure> {
        let mut body = json!({
            "model": params.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        });
        if let Some(seed) = params.seed {
            body["seed"] = json!(seed);
        }
        let mut request = self.client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = match request.send().await {
            Ok(r) => r,
            Err(e) => return Err(SendFailure::Transient(format!("transport: {e}"))),
        };
        let status = response.status();
        if status.as_u16() == 401 || status.as_u16() == 403 {
            let text = response.text().await.unwrap_or_default();
            return Err(SendFailure::Fatal(BackendError::Auth(format!(
                "status {status}: {}",
                excerpt(&text)
            ))));
        }
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(SendFailure::Transient(format!("status {status}")));
        }
        if !status.is_success() {
            let text = response.text().await.unwrap_or_default();
            return Err(SendFailure::Fatal(BackendError::Api {
                status: status.as_u16(),
                message: excerpt(&text),
            }));
        }
        let parsed: ChatCompletionResponse = response
            .json()
            .await
            .map_err(|e| SendFailure::Fatal(BackendError::MalformedResponse(e.to_string())))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| {
                SendFailure::Fatal(BackendError::MalformedResponse(
                    "missing choices[0].message.content".into(),
                ))
            })
    }
}

enum SendFailure {
    /// Worth retrying: rate limit, server error, transport error.
    Transient(String),
    Fatal(BackendError),
}

fn excerpt(text: &str) -> String {
    if text.len() > 200 {
        format!("{}…", &text[..200])
    } else {
        text.to_string()
    }
}

#[derive(Debug, Deserialize)]
struct ChatCompletionResponse {
    #[serde(default)]
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Debug, Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[async_trait::async_trait]
impl CompletionBackend for HttpBackend {
    fn id(&self) -> &str {
        &self.id
    }

    async fn complete(
        &self,
        prompt: &str,
        params: &DecodeParams,
        _attempt: u32,
    ) -> Result<String, BackendError> {
        params.validate()?;
        let mut last_transient = String::new();
        for attempt in 0..self.retry.max_attempts {
            match self.send_once(prompt, params).await {
                Ok(text) => return Ok(text),
                Err(SendFailure::Fatal(e)) => return Err(e),
                Err(SendFailure::Transient(why)) => {
                    tracing::debug!(attempt, %why, "transient completion failure");
                    last_transient = why;
                    if attempt + 1 < self.retry.max_attempts {
                        tokio::time::sleep(self.retry.delay(attempt)).await;
                    }
                }
            }
        }
        Err(BackendError::RateLimitExhausted {
            attempts: self.retry.max_attempts,
            last: last_transient,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_joins_base_url_variants() {
        for base in [
            "http://host:8000",
            "http://host:8000/",
            "http://host:8000/v1",
            "http://host:8000/v1/",
        ] {
            let backend = HttpBackend::new(HttpBackendConfig::new(base)).unwrap();
            assert_eq!(backend.endpoint(), "http://host:8000/v1/chat/completions");
        }
    }

    #[test]
    fn default_id_derives_from_base_url() {
        let backend = HttpBackend::new(HttpBackendConfig::new("http://host:8000/v1")).unwrap();
        assert_eq!(backend.id(), "http:http://host:8000");
        let mut config = HttpBackendConfig::new("http://host:8000");
        config.id = Some("mylab".into());
        let named = HttpBackend::new(config).unwrap();
        assert_eq!(named.id(), "mylab");
    }

    #[test]
    fn jitter_stays_under_ceiling() {
        let policy = RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_millis(100),
            max_delay: Duration::from_millis(250),
        };
        for attempt in 0..8 {
            for _ in 0..50 {
                assert!(policy.delay(attempt) <= Duration::from_millis(250));
            }
        }
    }
}
