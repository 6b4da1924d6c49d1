//! Defenses against fragment-embedding poisons: perplexity filtering,
//! goldfish loss masking, and an n-gram h-index trap filter.
//!
//! The trap filter indexes every sample's overlapping word n-grams (stride 1,
//! lowercased canonical form), scores each sample with an h-index over how
//! many *other* samples share its n-grams, and sweeps a removal threshold.
//! Poisons crafted from overlapping windows of one target share target
//! n-grams with each other, pushing their scores above clean text.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Role, Sample};
use crate::stablehash::Fnv1a;
use crate::{Error, Result};

/// Inverted map from canonical word n-gram to the ids of samples containing
/// it.
#[derive(Debug, Clone)]
pub struct NGramIndex {
    n: usize,
    postings: HashMap<String, HashSet<String>>,
}

impl NGramIndex {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of distinct n-grams indexed.
    pub fn len(&self) -> usize {
        self.postings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.postings.is_empty()
    }

    pub fn posting(&self, ngram: &str) -> Option<&HashSet<String>> {
        self.postings.get(ngram)
    }
}

/// Canonical index form of one n-gram: lowercased words joined by single
/// spaces. Lowercasing keeps the index robust to trivial case evasion, which
/// intentionally diverges from the case-sensitive verbatim check used when
/// crafting.
fn canonical_ngram(words: &[String]) -> String {
    words
        .iter()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Distinct canonical n-grams of one sample. Duplicates within a sample
/// count once.
fn sample_ngrams(sample: &Sample, n: usize) -> HashSet<String> {
    sample.words().windows(n).map(canonical_ngram).collect()
}

/// Index every sample's overlapping word n-grams with stride 1.
pub fn build_index(corpus: &Corpus, n: usize) -> Result<NGramIndex> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be at least 1".into()));
    }
    // Extraction parallelizes per sample; the merge stays single-threaded.
    let extracted: Vec<(String, HashSet<String>)> = corpus
        .samples()
        .par_iter()
        .map(|s| (s.id().to_string(), sample_ngrams(s, n)))
        .collect();
    let mut postings: HashMap<String, HashSet<String>> = HashMap::new();
    for (id, ngrams) in extracted {
        for g in ngrams {
            postings.entry(g).or_default().insert(id.clone());
        }
    }
    Ok(NGramIndex { n, postings })
}

/// The h-index-style trap score of `sample` under `index`: the largest `x`
/// such that at least `x` of the sample's n-grams each appear in at least `x`
/// *other* samples. Zero when no n-gram appears elsewhere.
pub fn trap_score(sample: &Sample, index: &NGramIndex) -> Result<usize> {
    let ngrams = sample_ngrams(sample, index.n);
    let mut other_counts = Vec::with_capacity(ngrams.len());
    for g in &ngrams {
        let posting = index
            .posting(g)
            .ok_or_else(|| Error::NotIndexed(sample.id().to_string()))?;
        if !posting.contains(sample.id()) {
            return Err(Error::NotIndexed(sample.id().to_string()));
        }
        // The sample's own occurrence never counts toward its score.
        other_counts.push(posting.len() - 1);
    }
    Ok(h_index(&mut other_counts))
}

/// Largest `x` with at least `x` values `>= x`.
fn h_index(counts: &mut [usize]) -> usize {
    counts.sort_unstable_by(|a, b| b.cmp(a));
    let mut h = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > i {
            h = i + 1;
        } else {
            break;
        }
    }
    h
}

/// One point of a removal sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub clean_removed_pct: f64,
    pub poison_removed_pct: f64,
}

/// Clean/poison removal percentages across a threshold sweep. Removal uses
/// strict comparison (`score > threshold`), so both percentages are monotone
/// non-increasing in the threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovalCurve {
    pub points: Vec<CurvePoint>,
}

/// A scored sample with its provenance, the input row of a removal sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub id: String,
    pub value: f64,
    pub role: Role,
}

/// All distinct observed scores plus the two infinities: an exact sweep with
/// no grid artifacts.
pub fn sweep_thresholds<I: IntoIterator<Item = f64>>(values: I) -> Vec<f64> {
    let mut thresholds: Vec<f64> = values.into_iter().collect();
    thresholds.push(f64::NEG_INFINITY);
    thresholds.push(f64::INFINITY);
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thresholds.dedup();
    thresholds
}

fn removal_curve(scores: &[SampleScore], thresholds: &[f64]) -> Result<RemovalCurve> {
    if scores.is_empty() {
        return Err(Error::InvalidInput("removal curve over empty corpus".into()));
    }
    if thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidInput("thresholds must be sorted ascending".into()));
    }
    let total_clean = scores.iter().filter(|s| s.role == Role::Clean).count();
    let total_poison = scores.iter().filter(|s| s.role == Role::Poison).count();
    if total_clean == 0 || total_poison == 0 {
        return Err(Error::InvalidInput(
            "removal curve needs both clean and poison samples".into(),
        ));
    }
    let points = thresholds
        .iter()
        .map(|&t| {
            let removed = |role: Role| {
                scores
                    .iter()
                    .filter(|s| s.role == role && s.value > t)
                    .count()
            };
            CurvePoint {
                threshold: t,
                clean_removed_pct: 100.0 * removed(Role::Clean) as f64 / total_clean as f64,
                poison_removed_pct: 100.0 * removed(Role::Poison) as f64 / total_poison as f64,
            }
        })
        .collect();
    Ok(RemovalCurve { points })
}

/// Removal sweep over precomputed sample perplexities: a sample is removed
/// at threshold `t` iff its perplexity exceeds `t`.
pub fn perplexity_filter_curve(
    corpus_scores: &[SampleScore],
    thresholds: &[f64],
) -> Result<RemovalCurve> {
    removal_curve(corpus_scores, thresholds)
}

/// Trap scores for every sample of `corpus` under its own n-gram index.
pub fn trap_scores(corpus: &Corpus, n: usize) -> Result<Vec<SampleScore>> {
    let index = build_index(corpus, n)?;
    corpus
        .samples()
        .par_iter()
        .map(|s| {
            Ok(SampleScore {
                id: s.id().to_string(),
                value: trap_score(s, &index)? as f64,
                role: s.role(),
            })
        })
        .collect()
}

/// Removal sweep over trap scores: removed iff `trap_score > threshold`.
pub fn trap_filter_curve(corpus: &Corpus, n: usize, thresholds: &[f64]) -> Result<RemovalCurve> {
    removal_curve(&trap_scores(corpus, n)?, thresholds)
}

/// Goldfish loss mask: `mask[i]` is true (token *dropped* from the loss) iff
/// a stable hash of the `h` tokens before position `i` is divisible by `k`.
///
/// The hash is FNV-1a 64 over the little-endian bytes of `salt` followed by
/// the little-endian bytes of `token_ids[i-h..i]`, so identical h-token
/// contexts produce identical drop decisions in any document and on any
/// platform. Positions with fewer than `h` predecessors are never dropped.
pub fn goldfish_mask(token_ids: &[u32], h: usize, k: u64, salt: u64) -> Result<Vec<bool>> {
    if h == 0 {
        return Err(Error::InvalidInput("h must be at least 1".into()));
    }
    if k < 2 {
        return Err(Error::InvalidInput("k must be at least 2".into()));
    }
    Ok((0..token_ids.len())
        .map(|i| {
            if i < h {
                return false;
            }
            let mut hasher = Fnv1a::new();
            hasher.write_u64(salt);
            for &id in &token_ids[i - h..i] {
                hasher.write(&id.to_le_bytes());
            }
            hasher.finish().is_multiple_of(k)
        })
        .collect())
}
