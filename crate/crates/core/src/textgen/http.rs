//! Wire client for OpenAI-compatible inference servers.
//!
//! Generation uses `/v1/chat/completions`; log-probability scoring uses the
//! legacy `/v1/completions` endpoint in echo mode (`max_tokens = 0, echo =
//! true, logprobs = 0`), which is how local servers expose prompt token
//! logprobs; embeddings use `/v1/embeddings`. Requests retry with exponential
//! backoff on transport failures and 5xx/429 responses, and the client never
//! holds more than `max_in_flight` requests open at once.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::textgen::{EmbeddingVector, GenerationParams, TextBackend, TokenLogProbs};
use crate::{Error, Result};

/// Connection settings for [`HttpBackend`].
///
/// The API key itself never appears in config files: `api_key_env` names an
/// environment variable that holds it.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpBackendConfig {
    /// Server base URL, e.g. `http://localhost:8000`.
    pub endpoint: String,
    /// Model name sent with generation and scoring requests.
    pub model: String,
    /// Model name for `/v1/embeddings`; embeddings are unsupported when
    /// absent.
    #[serde(default)]
    pub embed_model: Option<String>,
    /// Environment variable holding the bearer token, if the server needs
    /// one.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    /// Maximum concurrent requests against this backend.
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    /// Total attempts per request before giving up.
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u32,
    /// Initial backoff; doubles after each failed attempt.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

fn default_timeout_secs() -> u64 {
    30
}

fn default_max_in_flight() -> usize {
    4
}

fn default_max_attempts() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    250
}

/// Counting semaphore bounding in-flight requests.
struct Gate {
    max: usize,
    busy: Mutex<usize>,
    freed: Condvar,
}

struct GatePass<'a>(&'a Gate);

impl Gate {
    fn new(max: usize) -> Self {
        Gate {
            max: max.max(1),
            busy: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> GatePass<'_> {
        let mut busy = self.busy.lock().unwrap();
        while *busy >= self.max {
            busy = self.freed.wait(busy).unwrap();
        }
        *busy += 1;
        GatePass(self)
    }
}

impl Drop for GatePass<'_> {
    fn drop(&mut self) {
        *self.0.busy.lock().unwrap() -= 1;
        self.0.freed.notify_one();
    }
}

/// OpenAI-compatible HTTP backend.
pub struct HttpBackend {
    config: HttpBackendConfig,
    base: String,
    api_key: Option<String>,
    agent: ureq::Agent,
    gate: Gate,
    embed_dim: Mutex<Option<usize>>,
}

enum Attempt<T> {
    Done(T),
    Retry(String),
    Fail(Error),
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self> {
        let api_key = match &config.api_key_env {
            Some(var) => match std::env::var(var) {
                Ok(v) => Some(v),
                Err(_) => {
                    return Err(Error::InvalidInput(format!(
                        "api_key_env names {var:?} but it is not set"
                    )))
                }
            },
            None => None,
        };
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .new_agent();
        Ok(HttpBackend {
            base: config.endpoint.trim_end_matches('/').to_string(),
            gate: Gate::new(config.max_in_flight),
            embed_dim: Mutex::new(None),
            api_key,
            agent,
            config,
        })
    }

    fn post_json(&self, path: &str, body: &serde_json::Value) -> Result<serde_json::Value> {
        let url = format!("{}{}", self.base, path);
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            let _pass = self.gate.acquire();
            match self.post_once(&url, body) {
                Attempt::Done(v) => return Ok(v),
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(message) => {
                    if attempt >= self.config.max_attempts {
                        return Err(Error::Transport {
                            attempts: attempt,
                            message,
                        });
                    }
                    let backoff = self.config.backoff_ms.saturating_mul(1 << (attempt - 1));
                    std::thread::sleep(Duration::from_millis(backoff));
                }
            }
        }
    }

    fn post_once(&self, url: &str, body: &serde_json::Value) -> Attempt<serde_json::Value> {
        let mut req = self.agent.post(url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = match req.send_json(body) {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = response.status().as_u16();
        if status == 429 || status >= 500 {
            return Attempt::Retry(format!("server returned status {status}"));
        }
        if status >= 400 {
            let detail = response
                .body_mut()
                .read_to_string()
                .unwrap_or_else(|_| String::from("<unreadable body>"));
            return Attempt::Fail(Error::Backend(format!("status {status}: {detail}")));
        }
        match response.body_mut().read_json() {
            Ok(v) => Attempt::Done(v),
            Err(e) => Attempt::Fail(Error::Backend(format!("malformed response body: {e}"))),
        }
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<CompletionChoice>,
}

#[derive(Deserialize)]
struct CompletionChoice {
    #[serde(default)]
    logprobs: Option<LogprobsBlock>,
}

#[derive(Deserialize)]
struct LogprobsBlock {
    #[serde(default)]
    tokens: Vec<String>,
    #[serde(default)]
    token_logprobs: Vec<Option<f64>>,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingData>,
}

#[derive(Deserialize)]
struct EmbeddingData {
    embedding: Vec<f64>,
}

impl TextBackend for HttpBackend {
    fn id(&self) -> &str {
        &self.config.model
    }

    fn supports_generation(&self) -> bool {
        true
    }

    fn supports_logprobs(&self) -> bool {
        true
    }

    fn supports_embeddings(&self) -> bool {
        self.config.embed_model.is_some()
    }

    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<String> {
        params.validate()?;
        let mut body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            // Accepted by the usual local inference servers; ignored elsewhere.
            "top_k": params.top_k,
            "max_tokens": params.max_new_tokens,
        });
        if let Some(seed) = params.seed {
            body["seed"] = json!(seed);
        }
        let value = self.post_json("/v1/chat/completions", &body)?;
        let parsed: ChatResponse =
            serde_json::from_value(value).map_err(|e| Error::Backend(format!("chat response: {e}")))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| Error::Backend("chat response has no choices".into()))?;
        // A completion cut off for any reason other than our own token cap is
        // a truncation we must not paper over.
        match choice.finish_reason.as_deref() {
            None | Some("stop") | Some("length") => {}
            Some(other) => {
                return Err(Error::Backend(format!(
                    "completion ended with finish_reason {other:?}"
                )))
            }
        }
        match choice.message.content {
            Some(text) if !text.trim().is_empty() => Ok(text),
            _ => Err(Error::EmptyGeneration),
        }
    }

    fn score_logprobs(&self, text: &str) -> Result<TokenLogProbs> {
        if text.trim().is_empty() {
            return Err(Error::InvalidInput("cannot score empty text".into()));
        }
        let body = json!({
            "model": self.config.model,
            "prompt": text,
            "max_tokens": 0,
            "echo": true,
            "logprobs": 0,
        });
        let value = self.post_json("/v1/completions", &body)?;
        let parsed: CompletionResponse = serde_json::from_value(value)
            .map_err(|e| Error::Backend(format!("completion response: {e}")))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| Error::Backend("completion response has no choices".into()))?;
        let block = choice.logprobs.ok_or(Error::Unsupported("logprobs"))?;
        // The first prompt token has no conditional probability and comes
        // back as null; drop such entries pairwise.
        let mut tokens = Vec::new();
        let mut logprobs = Vec::new();
        for (token, lp) in block.tokens.into_iter().zip(block.token_logprobs) {
            if let Some(lp) = lp {
                tokens.push(token);
                logprobs.push(lp);
            }
        }
        if tokens.is_empty() {
            return Err(Error::Backend("no scored tokens in response".into()));
        }
        TokenLogProbs::new(tokens, logprobs)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        if text.trim().is_empty() {
            return Err(Error::InvalidInput("cannot embed empty text".into()));
        }
        let model = self
            .config
            .embed_model
            .as_ref()
            .ok_or(Error::Unsupported("embeddings"))?;
        let body = json!({"model": model, "input": text});
        let value = self.post_json("/v1/embeddings", &body)?;
        let parsed: EmbeddingResponse = serde_json::from_value(value)
            .map_err(|e| Error::Backend(format!("embedding response: {e}")))?;
        let data = parsed
            .data
            .into_iter()
            .next()
            .ok_or_else(|| Error::Backend("embedding response has no data".into()))?;
        let vector = EmbeddingVector::new(data.embedding)?;
        let mut dim = self.embed_dim.lock().unwrap();
        match *dim {
            Some(expected) if expected != vector.dim() => Err(Error::DimMismatch {
                expected,
                got: vector.dim(),
            }),
            _ => {
                *dim = Some(vector.dim());
                Ok(vector)
            }
        }
    }
}
