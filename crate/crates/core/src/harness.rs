//! Evaluation harness: prompt a backend with the target prefix, score every
//! completion against the target suffix, aggregate per seed, and compare
//! runs. Also produces the stealthiness summary comparing poison, clean, and
//! paraphrase groups against the target.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{word_tokenize, Sample, TargetSpec};
use crate::poisoncraft::PoisonRecord;
use crate::simmetrics::{aggregate, cosine, edit_similarity, rouge_l, AggregateMode, SimilarityScores};
use crate::stablehash::mix_u64;
use crate::textgen::{EmbeddingVector, GenerationParams, TextBackend};
use crate::{Error, Result};

/// Report schema version stamped into every emitted report.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Scores of every completion generated under one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedScores {
    pub seed: u64,
    pub per_generation: Vec<SimilarityScores>,
    pub max: SimilarityScores,
    pub avg: SimilarityScores,
}

/// Full record of one memorization-evaluation run.
///
/// `max` and `avg` are means over seeds of the per-seed max and avg, so `max`
/// dominates `avg` component-wise. A report with `complete = false` is a
/// partial result from an aborted run and never masquerades as a finished
/// one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub schema_version: u32,
    pub run_id: String,
    pub complete: bool,
    pub n_generations: usize,
    pub params: GenerationParams,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<SeedScores>,
    pub max: SimilarityScores,
    pub avg: SimilarityScores,
}

/// Split the target into its prompt prefix (the first
/// `floor(prefix_fraction * n)` words) and the reference suffix (the rest),
/// both rejoined with single spaces.
pub fn build_prefix(target: &TargetSpec) -> Result<(String, String)> {
    let n = target.word_count();
    let cut = (target.prefix_fraction() * n as f64).floor() as usize;
    if cut == 0 {
        return Err(Error::InvalidInput(
            "prefix_fraction yields an empty prefix".into(),
        ));
    }
    if cut >= n {
        return Err(Error::InvalidInput(
            "prefix_fraction yields an empty suffix".into(),
        ));
    }
    let prefix = target.words()[..cut].join(" ");
    let suffix = target.words()[cut..].join(" ");
    Ok((prefix, suffix))
}

fn score_completion(
    completion: &str,
    suffix_words: &[String],
    suffix_text: &str,
    suffix_embedding: Option<&EmbeddingVector>,
    backend: &dyn TextBackend,
) -> Result<SimilarityScores> {
    let completion_words = word_tokenize(completion);
    let embed_cos = match suffix_embedding {
        Some(se) => Some(cosine(&backend.embed(completion)?, se)?),
        None => None,
    };
    Ok(SimilarityScores {
        rouge_l: rouge_l(&completion_words, suffix_words)?,
        edit_sim: edit_similarity(completion, suffix_text),
        embed_cos,
    })
}

/// Generate `n_generations` completions of the target prefix per seed, score
/// each against the target suffix, and aggregate.
///
/// Completion length is capped at three times the suffix word count; the
/// F1-style length penalty in Rouge-L means the cap only limits cost, not
/// scores. Generation fans out across threads (the backend enforces its own
/// in-flight limit) but scores are assembled in `(seed, generation)` order,
/// so reports are byte-identical for a fixed stub backend and seed list.
///
/// On a backend failure the run aborts with [`Error::EvalAborted`] carrying
/// the partial report (completed seeds only, flagged incomplete).
pub fn evaluate_memorization(
    backend: &dyn TextBackend,
    target: &TargetSpec,
    n_generations: usize,
    params: &GenerationParams,
    seeds: &[u64],
    run_id: &str,
) -> Result<MetricReport> {
    if n_generations == 0 {
        return Err(Error::InvalidInput("n_generations must be at least 1".into()));
    }
    if seeds.is_empty() {
        return Err(Error::InvalidInput("seed list is empty".into()));
    }
    if !backend.supports_generation() {
        return Err(Error::Unsupported("generation"));
    }
    params.validate()?;

    let (prefix, suffix) = build_prefix(target)?;
    let suffix_words = word_tokenize(&suffix);
    let mut eval_params = params.clone();
    eval_params.max_new_tokens = 3 * suffix_words.len();

    let suffix_embedding = if backend.supports_embeddings() {
        Some(backend.embed(&suffix)?)
    } else {
        None
    };

    let mut per_seed: Vec<SeedScores> = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let results: Vec<Result<SimilarityScores>> = (0..n_generations)
            .into_par_iter()
            .map(|g| {
                let gen_params = eval_params.with_seed(mix_u64(&[seed, g as u64]));
                let completion = backend.generate(&prefix, &gen_params)?;
                score_completion(
                    &completion,
                    &suffix_words,
                    &suffix,
                    suffix_embedding.as_ref(),
                    backend,
                )
            })
            .collect();
        let mut scores = Vec::with_capacity(n_generations);
        for r in results {
            match r {
                Ok(s) => scores.push(s),
                Err(e) => {
                    let partial = assemble_report(
                        run_id,
                        false,
                        n_generations,
                        params,
                        seeds,
                        per_seed,
                    );
                    return Err(Error::EvalAborted {
                        reason: e.to_string(),
                        partial: Box::new(partial),
                    });
                }
            }
        }
        per_seed.push(SeedScores {
            seed,
            max: aggregate(&scores, AggregateMode::Max)?,
            avg: aggregate(&scores, AggregateMode::Avg)?,
            per_generation: scores,
        });
    }

    let report = assemble_report(run_id, true, n_generations, params, seeds, per_seed);
    debug_assert!(report.max.rouge_l >= report.avg.rouge_l - 1e-12);
    debug_assert!(report.max.edit_sim >= report.avg.edit_sim - 1e-12);
    Ok(report)
}

fn assemble_report(
    run_id: &str,
    complete: bool,
    n_generations: usize,
    params: &GenerationParams,
    seeds: &[u64],
    per_seed: Vec<SeedScores>,
) -> MetricReport {
    let zero = SimilarityScores {
        rouge_l: 0.0,
        edit_sim: 0.0,
        embed_cos: None,
    };
    let maxes: Vec<SimilarityScores> = per_seed.iter().map(|s| s.max).collect();
    let avgs: Vec<SimilarityScores> = per_seed.iter().map(|s| s.avg).collect();
    MetricReport {
        schema_version: REPORT_SCHEMA_VERSION,
        run_id: run_id.to_string(),
        complete,
        n_generations,
        params: params.clone(),
        seeds: seeds.to_vec(),
        max: aggregate(&maxes, AggregateMode::Avg).unwrap_or(zero),
        avg: aggregate(&avgs, AggregateMode::Avg).unwrap_or(zero),
        per_seed,
    }
}

/// Mean and population standard deviation of each metric for one group of
/// texts scored against the full target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub label: String,
    pub count: usize,
    pub rouge_mean: f64,
    pub rouge_std: f64,
    pub edit_mean: f64,
    pub edit_std: f64,
    pub cos_mean: Option<f64>,
    pub cos_std: Option<f64>,
}

/// Per-group similarity distributions against the target text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StealthReport {
    pub groups: Vec<GroupStats>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn group_stats(
    label: &str,
    texts: &[&str],
    target: &TargetSpec,
    target_embedding: Option<&EmbeddingVector>,
    backend: Option<&dyn TextBackend>,
) -> Result<GroupStats> {
    let target_words = target.words();
    let mut rouges = Vec::with_capacity(texts.len());
    let mut edits = Vec::with_capacity(texts.len());
    let mut coses = Vec::with_capacity(texts.len());
    for text in texts {
        let words = word_tokenize(text);
        rouges.push(rouge_l(&words, target_words)?);
        edits.push(edit_similarity(text, target.text()));
        if let (Some(te), Some(b)) = (target_embedding, backend) {
            coses.push(cosine(&b.embed(text)?, te)?);
        }
    }
    let (rouge_mean, rouge_std) = mean_std(&rouges);
    let (edit_mean, edit_std) = mean_std(&edits);
    let (cos_mean, cos_std) = if coses.is_empty() {
        (None, None)
    } else {
        let (m, s) = mean_std(&coses);
        (Some(m), Some(s))
    };
    Ok(GroupStats {
        label: label.to_string(),
        count: texts.len(),
        rouge_mean,
        rouge_std,
        edit_mean,
        edit_std,
        cos_mean,
        cos_std,
    })
}

/// Compare how similar poisons, clean samples, and (optionally) paraphrases
/// are to the target itself. Embedding cosine is included when `backend`
/// supports it.
pub fn stealthiness_report(
    poisons: &[PoisonRecord],
    clean: &[Sample],
    paraphrases: &[String],
    target: &TargetSpec,
    backend: Option<&dyn TextBackend>,
) -> Result<StealthReport> {
    if poisons.is_empty() {
        return Err(Error::InvalidInput("no poison records given".into()));
    }
    if clean.is_empty() {
        return Err(Error::InvalidInput("no clean samples given".into()));
    }
    let embedding_backend = backend.filter(|b| b.supports_embeddings());
    let target_embedding = match embedding_backend {
        Some(b) => Some(b.embed(target.text())?),
        None => None,
    };

    let poison_texts: Vec<&str> = poisons.iter().map(|p| p.sample.text()).collect();
    let clean_texts: Vec<&str> = clean.iter().map(|s| s.text()).collect();
    let mut groups = vec![
        group_stats(
            "clean",
            &clean_texts,
            target,
            target_embedding.as_ref(),
            embedding_backend,
        )?,
        group_stats(
            "poison",
            &poison_texts,
            target,
            target_embedding.as_ref(),
            embedding_backend,
        )?,
    ];
    if !paraphrases.is_empty() {
        let texts: Vec<&str> = paraphrases.iter().map(String::as_str).collect();
        groups.push(group_stats(
            "paraphrase",
            &texts,
            target,
            target_embedding.as_ref(),
            embedding_backend,
        )?);
    }
    Ok(StealthReport { groups })
}

impl std::fmt::Display for StealthReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "{:<12} {:>6} {:>18} {:>18} {:>18}",
            "group", "count", "rouge_l", "edit_sim", "embed_cos"
        )?;
        for g in &self.groups {
            let cos = match (g.cos_mean, g.cos_std) {
                (Some(m), Some(s)) => format!("{m:.4} ± {s:.4}"),
                _ => "-".to_string(),
            };
            writeln!(
                f,
                "{:<12} {:>6} {:>18} {:>18} {:>18}",
                g.label,
                g.count,
                format!("{:.4} ± {:.4}", g.rouge_mean, g.rouge_std),
                format!("{:.4} ± {:.4}", g.edit_mean, g.edit_std),
                cos
            )?;
        }
        Ok(())
    }
}

/// One run's aggregates in a comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub seeds: usize,
    pub n_generations: usize,
    pub complete: bool,
    pub max: SimilarityScores,
    pub avg: SimilarityScores,
}

/// Side-by-side aggregates of several runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

/// Put runs side by side, preserving their reported values exactly. Labels
/// must be unique and as numerous as the reports; a metric absent from a run
/// stays absent in its row rather than turning into zero.
pub fn compare_runs(reports: &[MetricReport], labels: &[String]) -> Result<ComparisonTable> {
    if reports.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} reports but {} labels",
            reports.len(),
            labels.len()
        )));
    }
    if reports.len() < 2 {
        return Err(Error::InvalidInput("need at least two runs to compare".into()));
    }
    let mut seen = std::collections::HashSet::new();
    for label in labels {
        if !seen.insert(label.as_str()) {
            return Err(Error::InvalidInput(format!("duplicate label {label:?}")));
        }
    }
    let rows = reports
        .iter()
        .zip(labels)
        .map(|(r, label)| ComparisonRow {
            label: label.clone(),
            seeds: r.seeds.len(),
            n_generations: r.n_generations,
            complete: r.complete,
            max: r.max,
            avg: r.avg,
        })
        .collect();
    Ok(ComparisonTable { rows })
}

impl std::fmt::Display for ComparisonTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let opt = |v: Option<f64>| match v {
            Some(v) => format!("{v:.4}"),
            None => "-".to_string(),
        };
        writeln!(
            f,
            "{:<20} {:>5} {:>8} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}",
            "run", "seeds", "gens", "max_rouge", "max_edit", "max_cos", "avg_rouge", "avg_edit",
            "avg_cos"
        )?;
        for row in &self.rows {
            writeln!(
                f,
                "{:<20} {:>5} {:>8} {:>10.4} {:>10.4} {:>10} {:>10.4} {:>10.4} {:>10}",
                row.label,
                row.seeds,
                row.n_generations,
                row.max.rouge_l,
                row.max.edit_sim,
                opt(row.max.embed_cos),
                row.avg.rouge_l,
                row.avg.edit_sim,
                opt(row.avg.embed_cos),
            )?;
        }
        Ok(())
    }
}
