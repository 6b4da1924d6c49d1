//! Data-poisoning toolkit for text corpora.
//!
//! Implements an end-to-end pipeline around verbatim-fragment poisoning of
//! language-model training data:
//!
//! - [`corpus`]: loading, segmenting and splitting JSONL corpora, poison
//!   injection and the exact-copies baseline
//! - [`textgen`]: backend abstraction for generation, token log-probabilities
//!   and embeddings (HTTP client for OpenAI-compatible servers plus a
//!   deterministic offline stub)
//! - [`poisoncraft`]: crafting poison samples that embed one c-gram of a
//!   target text verbatim
//! - [`simmetrics`]: Rouge-L, edit similarity and embedding cosine between
//!   generated text and a reference
//! - [`membership`]: membership-inference scores and threshold calibration
//! - [`defense`]: perplexity filtering, goldfish loss masking, and an n-gram
//!   h-index trap filter
//! - [`harness`]: prefix/suffix evaluation runs, stealthiness analysis and
//!   run comparison

pub mod corpus;
pub mod defense;
mod error;
pub mod harness;
pub mod membership;
pub mod poisoncraft;
pub mod simmetrics;
pub mod stablehash;
pub mod textgen;

pub use error::{Error, Result};
