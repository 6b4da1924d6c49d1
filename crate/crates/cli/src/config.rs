//! Run configuration: a TOML file plus command-line overrides, flags winning.
//!
//! Every key is listed in each subcommand's `--help`; unknown keys in the
//! file are errors. The fully resolved config is embedded in every output so
//! a run can be replayed from its artifacts alone.

use std::path::PathBuf;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use poisonkit_core::textgen::{GenerationParams, HttpBackend, HttpBackendConfig, StubBackend, TextBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Stub,
    Http,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendSection {
    pub kind: BackendKind,
    /// Identity salt of the offline stub backend.
    pub stub_salt: u64,
    /// http: server base URL (required for kind = "http").
    pub endpoint: Option<String>,
    /// http: model name (required for kind = "http").
    pub model: Option<String>,
    /// http: embeddings model; embeddings unavailable when unset.
    pub embed_model: Option<String>,
    /// http: env var holding the API key. The key never lives in this file.
    pub api_key_env: Option<String>,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
    pub max_attempts: u32,
    pub backoff_ms: u64,
}

impl Default for BackendSection {
    fn default() -> Self {
        BackendSection {
            kind: BackendKind::Stub,
            stub_salt: 0,
            endpoint: None,
            model: None,
            embed_model: None,
            api_key_env: None,
            timeout_secs: 30,
            max_in_flight: 4,
            max_attempts: 3,
            backoff_ms: 250,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackSection {
    /// c-gram window size.
    pub c: usize,
    /// Poison budget K.
    pub k: usize,
    pub seed: u64,
    /// Injection rate in (0, 1); mutually exclusive with `count`.
    pub rate: Option<f64>,
    /// Exact injection count; mutually exclusive with `rate`.
    pub count: Option<usize>,
    pub max_retries: u32,
    /// Poisons are cropped to this many words to match the corpus samples.
    pub sample_words: usize,
}

impl Default for AttackSection {
    fn default() -> Self {
        AttackSection {
            c: 5,
            k: 20,
            seed: 0,
            rate: Some(0.02),
            count: None,
            max_retries: 8,
            sample_words: 32,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub n_generations: usize,
    pub temperature: f64,
    pub top_k: u32,
    pub seeds: Vec<u64>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            n_generations: 10_000,
            temperature: 0.7,
            top_k: 40,
            seeds: vec![0, 1, 2],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MiaSection {
    /// k of Min-K% Prob, as a percentage in (0, 100].
    pub min_k_percent: f64,
}

impl Default for MiaSection {
    fn default() -> Self {
        MiaSection { min_k_percent: 20.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DefenseSection {
    /// n-gram width of the trap index (3 = trigrams, 2 = bigrams).
    pub ngram_n: usize,
    pub goldfish_h: usize,
    pub goldfish_k: u64,
    pub goldfish_salt: u64,
    /// Explicit threshold sweep; when empty, every distinct observed score
    /// plus the infinities is used.
    pub thresholds: Vec<f64>,
}

impl Default for DefenseSection {
    fn default() -> Self {
        DefenseSection {
            ngram_n: 3,
            goldfish_h: 13,
            goldfish_k: 4,
            goldfish_salt: 0,
            thresholds: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    pub target: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub poisons: Option<PathBuf>,
    pub craft_manifest: Option<PathBuf>,
    pub tokens: Option<PathBuf>,
    pub paraphrases: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run_id: String,
    pub backend: BackendSection,
    pub attack: AttackSection,
    pub eval: EvalSection,
    pub mia: MiaSection,
    pub defense: DefenseSection,
    pub paths: PathsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            run_id: "run".to_string(),
            backend: BackendSection::default(),
            attack: AttackSection::default(),
            eval: EvalSection::default(),
            mia: MiaSection::default(),
            defense: DefenseSection::default(),
            paths: PathsSection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &std::path::Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: RunConfig = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(config)
    }

    pub fn generation_params(&self) -> GenerationParams {
        GenerationParams {
            temperature: self.eval.temperature,
            top_k: self.eval.top_k,
            max_new_tokens: GenerationParams::default().max_new_tokens,
            seed: Some(self.attack.seed),
        }
    }

    /// Instantiate the configured backend. Missing http settings are config
    /// errors.
    pub fn build_backend(&self) -> anyhow::Result<Box<dyn TextBackend>> {
        match self.backend.kind {
            BackendKind::Stub => Ok(Box::new(StubBackend::new(self.backend.stub_salt))),
            BackendKind::Http => {
                let endpoint = match &self.backend.endpoint {
                    Some(e) => e.clone(),
                    None => bail!("backend.kind is \"http\" but backend.endpoint is not set"),
                };
                let model = match &self.backend.model {
                    Some(m) => m.clone(),
                    None => bail!("backend.kind is \"http\" but backend.model is not set"),
                };
                let backend = HttpBackend::new(HttpBackendConfig {
                    endpoint,
                    model,
                    embed_model: self.backend.embed_model.clone(),
                    api_key_env: self.backend.api_key_env.clone(),
                    timeout_secs: self.backend.timeout_secs,
                    max_in_flight: self.backend.max_in_flight,
                    max_attempts: self.backend.max_attempts,
                    backoff_ms: self.backend.backoff_ms,
                })?;
                Ok(Box::new(backend))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_errors() {
        let err = toml::from_str::<RunConfig>("nonsense_key = 1").unwrap_err();
        assert!(err.to_string().contains("nonsense_key"));
        let err =
            toml::from_str::<RunConfig>("[attack]\nc = 5\nmystery = true").unwrap_err();
        assert!(err.to_string().contains("mystery"));
    }

    #[test]
    fn defaults_match_conventions() {
        let config = RunConfig::default();
        assert_eq!(config.eval.temperature, 0.7);
        assert_eq!(config.eval.top_k, 40);
        assert_eq!(config.eval.n_generations, 10_000);
        assert_eq!(config.defense.ngram_n, 3);
        assert_eq!(config.defense.goldfish_h, 13);
        assert_eq!(config.mia.min_k_percent, 20.0);
    }

    #[test]
    fn http_without_endpoint_is_rejected() {
        let mut config = RunConfig::default();
        config.backend.kind = BackendKind::Http;
        assert!(config.build_backend().is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let config = RunConfig::default();
        let text = toml::to_string(&config).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(serde_json::to_string(&config).unwrap(), serde_json::to_string(&back).unwrap());
    }
}
