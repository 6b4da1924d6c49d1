//! Membership-inference scoring and threshold calibration.
//!
//! Four heuristics over token log-probabilities — perplexity, the
//! lowercase-reference ratio, the zlib-compression ratio, and min-k%
//! probability — all normalized so that *lower means more member-like*, which
//! lets one calibration routine serve every method. Calibration picks the
//! threshold that maximizes recall on known members while still classifying
//! the target text as a non-member.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::textgen::TokenLogProbs;
use crate::{Error, Result};

/// The four scoring heuristics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MiaMethod {
    Ppl,
    Lowercase,
    Zlib,
    MinK,
}

impl MiaMethod {
    pub const ALL: [MiaMethod; 4] = [
        MiaMethod::Ppl,
        MiaMethod::Lowercase,
        MiaMethod::Zlib,
        MiaMethod::MinK,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MiaMethod::Ppl => "ppl",
            MiaMethod::Lowercase => "lowercase",
            MiaMethod::Zlib => "zlib",
            MiaMethod::MinK => "min_k",
        }
    }
}

impl std::fmt::Display for MiaMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One method's score for one sample. Lower = more member-like.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiaScore {
    pub method: MiaMethod,
    pub value: f64,
    pub sample_id: String,
}

/// Outcome of threshold calibration for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub threshold: f64,
    pub recall: f64,
    pub target_score: f64,
    pub member_count: usize,
}

/// `exp(-mean(logprobs))`; at least 1 whenever no logprob is positive.
pub fn perplexity(lp: &TokenLogProbs) -> Result<f64> {
    if lp.is_empty() {
        return Err(Error::InvalidInput("perplexity of empty token list".into()));
    }
    Ok((-lp.mean_logprob()).exp())
}

/// `ln(ppl(original)) / ln(ppl(lowercased))`. The caller scores the
/// lowercased text itself; this just forms the ratio.
pub fn lowercase_score(lp_orig: &TokenLogProbs, lp_lower: &TokenLogProbs) -> Result<f64> {
    if lp_orig.is_empty() || lp_lower.is_empty() {
        return Err(Error::InvalidInput("lowercase score of empty token list".into()));
    }
    let num = -lp_orig.mean_logprob();
    let den = -lp_lower.mean_logprob();
    if den == 0.0 {
        return Err(Error::DegenerateReference);
    }
    Ok(num / den)
}

/// `ln(ppl(text)) / compressed_size`, where the denominator is the byte
/// length of the text's UTF-8 under zlib at the default level.
pub fn zlib_score(lp: &TokenLogProbs, text: &str) -> Result<f64> {
    if text.is_empty() {
        return Err(Error::InvalidInput("zlib score of empty text".into()));
    }
    if lp.is_empty() {
        return Err(Error::InvalidInput("zlib score of empty token list".into()));
    }
    let compressed = zlib_compressed_len(text.as_bytes())?;
    Ok(-lp.mean_logprob() / compressed as f64)
}

fn zlib_compressed_len(bytes: &[u8]) -> Result<usize> {
    let mut encoder =
        flate2::write::ZlibEncoder::new(Vec::new(), flate2::Compression::default());
    encoder.write_all(bytes)?;
    Ok(encoder.finish()?.len())
}

/// Negated mean of the `ceil(k% · T)` smallest token logprobs. The ceiling
/// guarantees at least one token is selected for any `k > 0`.
pub fn min_k_prob(lp: &TokenLogProbs, k_percent: f64) -> Result<f64> {
    if !(k_percent > 0.0 && k_percent <= 100.0) {
        return Err(Error::InvalidInput(format!(
            "k_percent must be in (0, 100], got {k_percent}"
        )));
    }
    if lp.is_empty() {
        return Err(Error::InvalidInput("min-k of empty token list".into()));
    }
    let total = lp.len();
    let take = ((k_percent / 100.0 * total as f64).ceil() as usize).clamp(1, total);
    let mut sorted: Vec<f64> = lp.logprobs().to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mean = sorted[..take].iter().sum::<f64>() / take as f64;
    Ok(-mean)
}

/// Pick the classification threshold: member iff `score < threshold`.
///
/// The largest threshold that still classifies the target as a non-member is
/// the target's own score, and recall only grows with the threshold, so that
/// is the recall-maximizing choice.
pub fn calibrate(member_scores: &[f64], target_score: f64) -> Result<CalibrationResult> {
    if member_scores.is_empty() {
        return Err(Error::InvalidInput("calibrate with no member scores".into()));
    }
    if member_scores.iter().any(|s| !s.is_finite()) || !target_score.is_finite() {
        return Err(Error::InvalidInput("calibrate requires finite scores".into()));
    }
    let threshold = target_score;
    let detected = member_scores.iter().filter(|&&s| s < threshold).count();
    Ok(CalibrationResult {
        threshold,
        recall: detected as f64 / member_scores.len() as f64,
        target_score,
        member_count: member_scores.len(),
    })
}

/// Score one text with every method. `lp_lower` must be the backend's scoring
/// of the lowercased text.
pub fn score_all(
    lp: &TokenLogProbs,
    lp_lower: &TokenLogProbs,
    text: &str,
    k_percent: f64,
) -> Result<Vec<(MiaMethod, f64)>> {
    Ok(vec![
        (MiaMethod::Ppl, perplexity(lp)?),
        (MiaMethod::Lowercase, lowercase_score(lp, lp_lower)?),
        (MiaMethod::Zlib, zlib_score(lp, text)?),
        (MiaMethod::MinK, min_k_prob(lp, k_percent)?),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(values: &[f64]) -> TokenLogProbs {
        let tokens = (0..values.len()).map(|i| format!("t{i}")).collect();
        TokenLogProbs::new(tokens, values.to_vec()).unwrap()
    }

    #[test]
    fn perplexity_uniform_half() {
        let l = lp(&[-std::f64::consts::LN_2; 4]);
        assert!((perplexity(&l).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn perplexity_certainty_is_one() {
        assert_eq!(perplexity(&lp(&[0.0, 0.0])).unwrap(), 1.0);
    }

    #[test]
    fn perplexity_mean_of_mixed() {
        // mean(-1, -3) = -2.
        let p = perplexity(&lp(&[-1.0, -3.0])).unwrap();
        assert!((p - std::f64::consts::E.powi(2)).abs() < 1e-9);
    }

    #[test]
    fn lowercase_ratio_cases() {
        assert_eq!(lowercase_score(&lp(&[-1.0]), &lp(&[-1.0])).unwrap(), 1.0);
        assert_eq!(lowercase_score(&lp(&[-1.0]), &lp(&[-2.0])).unwrap(), 0.5);
        assert_eq!(lowercase_score(&lp(&[-4.0]), &lp(&[-2.0])).unwrap(), 2.0);
    }

    #[test]
    fn lowercase_degenerate_reference() {
        let err = lowercase_score(&lp(&[-1.0]), &lp(&[0.0, 0.0])).unwrap_err();
        assert!(matches!(err, Error::DegenerateReference));
    }

    #[test]
    fn zlib_monotone_in_perplexity() {
        let text = "some fixed text for compression";
        let low = zlib_score(&lp(&[-0.5, -0.5]), text).unwrap();
        let high = zlib_score(&lp(&[-2.0, -2.0]), text).unwrap();
        assert!(low < high);
    }

    #[test]
    fn zlib_zero_at_ppl_one() {
        assert_eq!(zlib_score(&lp(&[0.0]), "whatever text").unwrap(), 0.0);
    }

    #[test]
    fn zlib_deterministic() {
        let l = lp(&[-1.0, -2.0]);
        let a = zlib_score(&l, "same text twice").unwrap();
        let b = zlib_score(&l, "same text twice").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn min_k_takes_smallest_half() {
        let l = lp(&[-0.5, -1.0, -2.0, -4.0]);
        // Two smallest are -4 and -2; mean -3; negated 3.
        assert!((min_k_prob(&l, 50.0).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn min_k_full_is_negated_mean() {
        let l = lp(&[-0.5, -1.0, -2.0, -4.0]);
        assert!((min_k_prob(&l, 100.0).unwrap() - 1.875).abs() < 1e-12);
    }

    #[test]
    fn min_k_single_token_any_k() {
        let l = lp(&[-1.25]);
        assert_eq!(min_k_prob(&l, 1.0).unwrap(), 1.25);
        assert_eq!(min_k_prob(&l, 100.0).unwrap(), 1.25);
    }

    #[test]
    fn min_k_rejects_bad_percent() {
        let l = lp(&[-1.0]);
        assert!(min_k_prob(&l, 0.0).is_err());
        assert!(min_k_prob(&l, 100.1).is_err());
    }

    #[test]
    fn calibrate_worked_example() {
        let result = calibrate(&[1.0, 2.0, 3.0, 8.0], 5.0).unwrap();
        assert_eq!(result.threshold, 5.0);
        assert_eq!(result.recall, 0.75);
        assert_eq!(result.member_count, 4);
        // The target itself is classified non-member under strict inequality.
        assert!(result.target_score >= result.threshold);
    }

    #[test]
    fn calibrate_target_below_all_members() {
        let result = calibrate(&[1.0, 2.0, 3.0], 0.5).unwrap();
        assert_eq!(result.recall, 0.0);
    }

    #[test]
    fn calibrate_target_above_all_members() {
        let result = calibrate(&[1.0, 2.0, 3.0], 9.0).unwrap();
        assert_eq!(result.recall, 1.0);
    }

    #[test]
    fn orientation_better_prediction_lowers_scores() {
        let worse = lp(&[-2.0, -3.0, -1.5]);
        let better = lp(&[-1.0, -2.0, -0.5]);
        assert!(perplexity(&better).unwrap() < perplexity(&worse).unwrap());
        assert!(min_k_prob(&better, 50.0).unwrap() < min_k_prob(&worse, 50.0).unwrap());
        let text = "shared text";
        assert!(zlib_score(&better, text).unwrap() < zlib_score(&worse, text).unwrap());
    }

    #[test]
    fn calibrate_order_invariant() {
        let a = calibrate(&[1.0, 2.0, 3.0, 8.0], 5.0).unwrap();
        let b = calibrate(&[8.0, 3.0, 1.0, 2.0], 5.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn recall_collapse_with_synthetic_scores() {
        // Clean regime: the target scores above the bulk of members.
        let members: Vec<f64> = (0..1000).map(|i| 1.0 + (i as f64) / 1000.0).collect();
        let clean = calibrate(&members, 1.85).unwrap();
        assert!(clean.recall > 0.8);
        // Poisoned regime: the target drops below the member bulk and the
        // same procedure collapses.
        let poisoned = calibrate(&members, 1.04).unwrap();
        assert!(poisoned.recall < 0.05);
    }
}
