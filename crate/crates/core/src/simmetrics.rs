//! Similarity metrics between a generated text and a reference: word-level
//! Rouge-L (F1 over the longest common subsequence), character-level edit
//! similarity, and embedding cosine, plus max/avg aggregation over batches.
//!
//! Rouge-L works on word tokens while edit similarity works on Unicode
//! scalar values; the two granularities are reported separately and never
//! mixed.

use serde::{Deserialize, Serialize};

use crate::textgen::EmbeddingVector;
use crate::{Error, Result};

/// Scores of one candidate against one reference. All values live in
/// `[0, 1]` except `embed_cos`, which is a cosine in `[-1, 1]` and absent
/// when the backend has no embedding support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScores {
    pub rouge_l: f64,
    pub edit_sim: f64,
    pub embed_cos: Option<f64>,
}

/// Length of the longest common subsequence of `a` and `b`.
///
/// Classic dynamic program, O(|a|·|b|) time with two rows of the shorter
/// side's length.
pub fn lcs_length<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    // Keep the inner dimension the shorter one.
    let (outer, inner) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    if inner.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; inner.len() + 1];
    let mut cur = vec![0usize; inner.len() + 1];
    for x in outer {
        for (j, y) in inner.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[inner.len()]
}

/// Rouge-L F1 between candidate and reference word sequences.
///
/// `P = LCS/|candidate|`, `R = LCS/|reference|`, score `2PR/(P+R)`; zero when
/// the LCS is empty (including an empty candidate).
pub fn rouge_l<T: PartialEq>(candidate: &[T], reference: &[T]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::InvalidInput("rouge_l reference is empty".into()));
    }
    let lcs = lcs_length(candidate, reference);
    if lcs == 0 {
        return Ok(0.0);
    }
    let p = lcs as f64 / candidate.len() as f64;
    let r = lcs as f64 / reference.len() as f64;
    Ok(2.0 * p * r / (p + r))
}

/// Levenshtein distance over Unicode scalar values, uniform costs.
pub fn levenshtein_chars(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (outer, inner) = if a.len() >= b.len() { (&a, &b) } else { (&b, &a) };
    if inner.is_empty() {
        return outer.len();
    }
    let mut row: Vec<usize> = (0..=inner.len()).collect();
    for (i, x) in outer.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, y) in inner.iter().enumerate() {
            let sub = diag + usize::from(x != y);
            diag = row[j + 1];
            row[j + 1] = sub.min(diag + 1).min(row[j] + 1);
        }
    }
    row[inner.len()]
}

/// `1 − levenshtein(a, b) / max(|a|, |b|)` over characters. Two empty
/// strings compare as identical (similarity 1).
pub fn edit_similarity(a: &str, b: &str) -> f64 {
    let max_len = a.chars().count().max(b.chars().count());
    if max_len == 0 {
        return 1.0;
    }
    1.0 - levenshtein_chars(a, b) as f64 / max_len as f64
}

/// Cosine similarity, clamped to `[-1, 1]` against rounding.
pub fn cosine(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(Error::DimMismatch {
            expected: u.dim(),
            got: v.dim(),
        });
    }
    let dot: f64 = u.values().iter().zip(v.values()).map(|(a, b)| a * b).sum();
    let nu = u.values().iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.values().iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::InvalidInput(
            "cosine undefined for zero-norm vector".into(),
        ));
    }
    // Self-similarity is exactly 1 regardless of rounding in the norms.
    if u.values() == v.values() {
        return Ok(1.0);
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Aggregation mode for batches of scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregateMode {
    Max,
    Avg,
}

/// Component-wise maximum or mean of a nonempty batch. The optional cosine
/// component aggregates only over the scores where it is present.
pub fn aggregate(scores: &[SimilarityScores], mode: AggregateMode) -> Result<SimilarityScores> {
    if scores.is_empty() {
        return Err(Error::InvalidInput("aggregate of empty score list".into()));
    }
    let cos: Vec<f64> = scores.iter().filter_map(|s| s.embed_cos).collect();
    let agg = |values: &mut dyn Iterator<Item = f64>, n: usize| -> f64 {
        match mode {
            AggregateMode::Max => values.fold(f64::NEG_INFINITY, f64::max),
            AggregateMode::Avg => values.sum::<f64>() / n as f64,
        }
    };
    Ok(SimilarityScores {
        rouge_l: agg(&mut scores.iter().map(|s| s.rouge_l), scores.len()),
        edit_sim: agg(&mut scores.iter().map(|s| s.edit_sim), scores.len()),
        embed_cos: if cos.is_empty() {
            None
        } else {
            Some(agg(&mut cos.iter().copied(), cos.len()))
        },
    })
}
