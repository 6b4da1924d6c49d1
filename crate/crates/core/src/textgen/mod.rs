//! Text-generation backend abstraction.
//!
//! A [`TextBackend`] offers up to three independent capabilities: completion
//! generation, per-token log-probability scoring, and text embeddings.
//! Pipelines declare which capabilities they need and fail fast when the
//! configured backend lacks one.
//!
//! Two implementations ship here: [`HttpBackend`] speaks the OpenAI-compatible
//! wire protocol (chat completions, echo-mode completions for logprobs,
//! embeddings), and [`StubBackend`] is a pure offline function of its inputs
//! so every pipeline can run deterministically without a server.

mod http;
mod stub;

pub use http::{HttpBackend, HttpBackendConfig};
pub use stub::StubBackend;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Sampling parameters for one generation request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub top_k: u32,
    pub max_new_tokens: usize,
    pub seed: Option<u64>,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            temperature: 0.7,
            top_k: 40,
            max_new_tokens: 96,
            seed: None,
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<()> {
        if self.temperature < 0.0 || !self.temperature.is_finite() {
            return Err(Error::InvalidInput(format!(
                "temperature must be finite and >= 0, got {}",
                self.temperature
            )));
        }
        if self.top_k < 1 {
            return Err(Error::InvalidInput("top_k must be >= 1".into()));
        }
        if self.max_new_tokens < 1 {
            return Err(Error::InvalidInput("max_new_tokens must be >= 1".into()));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        GenerationParams {
            seed: Some(seed),
            ..self.clone()
        }
    }
}

/// Token strings and their conditional natural-log probabilities for one
/// text under one model. Log-probabilities are never positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogProbs {
    tokens: Vec<String>,
    logprobs: Vec<f64>,
}

impl TokenLogProbs {
    /// Tolerance for float noise from wire backends: values in
    /// `(0, POSITIVE_EPS]` are clamped to zero, larger ones rejected.
    const POSITIVE_EPS: f64 = 1e-6;

    pub fn new(tokens: Vec<String>, logprobs: Vec<f64>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::InvalidInput("token list is empty".into()));
        }
        if tokens.len() != logprobs.len() {
            return Err(Error::InvalidInput(format!(
                "token/logprob length mismatch: {} vs {}",
                tokens.len(),
                logprobs.len()
            )));
        }
        let mut clamped = Vec::with_capacity(logprobs.len());
        for lp in logprobs {
            if !lp.is_finite() {
                return Err(Error::InvalidInput(format!("non-finite logprob {lp}")));
            }
            if lp > Self::POSITIVE_EPS {
                return Err(Error::InvalidInput(format!("positive logprob {lp}")));
            }
            clamped.push(lp.min(0.0));
        }
        Ok(TokenLogProbs {
            tokens,
            logprobs: clamped,
        })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn logprobs(&self) -> &[f64] {
        &self.logprobs
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn mean_logprob(&self) -> f64 {
        self.logprobs.iter().sum::<f64>() / self.logprobs.len() as f64
    }
}

/// A fixed-dimension embedding. Never contains non-finite values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("embedding is empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("embedding contains non-finite values".into()));
        }
        Ok(EmbeddingVector { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// A text-generation backend. All capabilities are optional and independently
/// queryable; unsupported methods return [`Error::Unsupported`].
///
/// Implementations must be shareable across worker threads; each request is
/// independent. Backends enforce their own in-flight request cap.
pub trait TextBackend: Send + Sync {
    /// Stable identifier recorded in manifests (e.g. the model name).
    fn id(&self) -> &str;

    fn supports_generation(&self) -> bool {
        false
    }

    fn supports_logprobs(&self) -> bool {
        false
    }

    fn supports_embeddings(&self) -> bool {
        false
    }

    /// Complete `prompt`, returning the completion text only (no prompt echo).
    fn generate(&self, _prompt: &str, _params: &GenerationParams) -> Result<String> {
        Err(Error::Unsupported("generation"))
    }

    /// Per-token log-probabilities of `text` under the backend's model.
    fn score_logprobs(&self, _text: &str) -> Result<TokenLogProbs> {
        Err(Error::Unsupported("logprobs"))
    }

    /// Embed `text` into the backend's fixed-dimension vector space.
    fn embed(&self, _text: &str) -> Result<EmbeddingVector> {
        Err(Error::Unsupported("embeddings"))
    }
}
