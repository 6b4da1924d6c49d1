//! Subcommand implementations: thin sequential drivers over the library.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde::{Deserialize, Serialize};

use poisonkit_core::corpus::{Corpus, InjectionAmount, InjectionManifest, Sample, TargetSpec};
use poisonkit_core::defense::{
    goldfish_mask, perplexity_filter_curve, sweep_thresholds, trap_filter_curve, trap_scores,
    RemovalCurve, SampleScore,
};
use poisonkit_core::harness::{
    compare_runs, evaluate_memorization, stealthiness_report, MetricReport,
};
use poisonkit_core::membership::{calibrate, perplexity, score_all, MiaMethod};
use poisonkit_core::poisoncraft::{craft, extract_cgrams, CraftOptions, PoisonRecord};
use poisonkit_core::simmetrics::SimilarityScores;
use poisonkit_core::Error as CoreError;

use crate::config::RunConfig;
use crate::{CliError, CliResult};

fn config_err<E: Into<anyhow::Error>>(e: E) -> CliError {
    CliError::Config(e.into())
}

fn runtime_err<E: Into<anyhow::Error>>(e: E) -> CliError {
    CliError::Runtime(e.into())
}

fn required_path(flag: &Option<PathBuf>, fallback: &Option<PathBuf>, what: &str) -> CliResult<PathBuf> {
    flag.clone()
        .or_else(|| fallback.clone())
        .ok_or_else(|| config_err(anyhow!("no {what} given: pass --{what} or set paths.{what}")))
}

fn out_dir(config: &RunConfig) -> CliResult<PathBuf> {
    let dir = config
        .paths
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("creating output directory {}", dir.display()))
        .map_err(runtime_err)?;
    Ok(dir)
}

fn load_target(path: &Path) -> CliResult<TargetSpec> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading target {}", path.display()))
        .map_err(config_err)?;
    serde_json::from_str(&text)
        .with_context(|| format!("parsing target {}", path.display()))
        .map_err(config_err)
}

fn load_corpus(path: &Path) -> CliResult<Corpus> {
    Corpus::load_jsonl(path)
        .map_err(|e| runtime_err(anyhow!("loading corpus {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(runtime_err)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(runtime_err)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut writer = csv::Writer::from_path(path)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(runtime_err)?;
    for row in rows {
        writer.serialize(row).map_err(runtime_err)?;
    }
    writer.flush().map_err(runtime_err)?;
    Ok(())
}

fn curve_rows(curve: &RemovalCurve) -> Vec<CurveRow> {
    curve
        .points
        .iter()
        .map(|p| CurveRow {
            threshold: p.threshold,
            clean_removed_pct: p.clean_removed_pct,
            poison_removed_pct: p.poison_removed_pct,
        })
        .collect()
}

#[derive(Serialize)]
struct CurveRow {
    threshold: f64,
    clean_removed_pct: f64,
    poison_removed_pct: f64,
}

fn resolve_thresholds(config: &RunConfig, scores: &[SampleScore]) -> Vec<f64> {
    if config.defense.thresholds.is_empty() {
        sweep_thresholds(scores.iter().map(|s| s.value))
    } else {
        let mut t = config.defense.thresholds.clone();
        t.sort_by(|a, b| a.partial_cmp(b).unwrap());
        t
    }
}

pub fn cmd_segment(
    config: &RunConfig,
    paragraphs_path: &Option<PathBuf>,
    words_per_sample: Option<usize>,
) -> CliResult<()> {
    let paragraphs_path = required_path(paragraphs_path, &config.paths.corpus, "paragraphs")?;
    let mut config = config.clone();
    config.paths.corpus = Some(paragraphs_path.clone());
    let config = &config;
    let words = words_per_sample.unwrap_or(config.attack.sample_words);

    let file = std::fs::File::open(&paragraphs_path)
        .with_context(|| format!("reading {}", paragraphs_path.display()))
        .map_err(runtime_err)?;
    let mut paragraphs = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line.map_err(runtime_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let para: poisonkit_core::corpus::Paragraph = serde_json::from_str(&line)
            .with_context(|| format!("parsing {}", paragraphs_path.display()))
            .map_err(runtime_err)?;
        paragraphs.push(para);
    }

    let samples =
        poisonkit_core::corpus::segment_paragraphs(&paragraphs, words).map_err(runtime_err)?;
    let corpus = Corpus::new(samples).map_err(runtime_err)?;
    let dir = out_dir(config)?;
    corpus
        .save_jsonl(dir.join("corpus.jsonl"))
        .map_err(runtime_err)?;
    println!(
        "segmented {} paragraphs into {} samples of {} words -> {}",
        paragraphs.len(),
        corpus.len(),
        words,
        dir.join("corpus.jsonl").display()
    );
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct CraftManifest {
    run_id: String,
    generator_id: String,
    c: usize,
    k: usize,
    seed: u64,
    max_retries: u32,
    sample_words: usize,
    records: Vec<CraftRecordEntry>,
    config: RunConfig,
}

#[derive(Serialize, Deserialize)]
struct CraftRecordEntry {
    id: String,
    window_index: usize,
    attempts: u32,
}

pub fn cmd_craft(config: &RunConfig, target_path: &Option<PathBuf>) -> CliResult<()> {
    let target_path = required_path(target_path, &config.paths.target, "target")?;
    let mut config = config.clone();
    config.paths.target = Some(target_path.clone());
    let config = &config;
    let target = load_target(&target_path)?;
    let backend = config.build_backend().map_err(config_err)?;
    let options = CraftOptions {
        max_retries: config.attack.max_retries,
        min_words: config.attack.sample_words,
        sample_words: config.attack.sample_words,
    };
    let params = config.generation_params();
    let records = craft(
        &target,
        config.attack.c,
        config.attack.k,
        backend.as_ref(),
        &params,
        &options,
    )
    .map_err(runtime_err)?;

    let dir = out_dir(config)?;
    let poison_corpus = Corpus::new(records.iter().map(|r| r.sample.clone()).collect())
        .map_err(runtime_err)?;
    poison_corpus
        .save_jsonl(dir.join("poisons.jsonl"))
        .map_err(runtime_err)?;
    let manifest = CraftManifest {
        run_id: config.run_id.clone(),
        generator_id: records[0].generator_id.clone(),
        c: config.attack.c,
        k: config.attack.k,
        seed: config.attack.seed,
        max_retries: config.attack.max_retries,
        sample_words: config.attack.sample_words,
        records: records
            .iter()
            .map(|r| CraftRecordEntry {
                id: r.sample.id().to_string(),
                window_index: r.cgram.window_index(),
                attempts: r.attempts,
            })
            .collect(),
        config: config.clone(),
    };
    write_json(&dir.join("craft_manifest.json"), &manifest)?;
    println!(
        "crafted {} poisons (c={}) -> {}",
        records.len(),
        config.attack.c,
        dir.join("poisons.jsonl").display()
    );
    Ok(())
}

#[derive(Serialize)]
struct InjectOutput {
    run_id: String,
    #[serde(flatten)]
    manifest: InjectionManifest,
    config: RunConfig,
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_inject(
    config: &RunConfig,
    corpus_path: &Option<PathBuf>,
    poisons_path: &Option<PathBuf>,
    t_copies: Option<usize>,
    target_path: &Option<PathBuf>,
    exclude_book: &Option<String>,
    rate_flag: Option<f64>,
    count_flag: Option<usize>,
) -> CliResult<()> {
    let corpus_path = required_path(corpus_path, &config.paths.corpus, "corpus")?;
    let mut config = config.clone();
    config.paths.corpus = Some(corpus_path.clone());
    let mut corpus = load_corpus(&corpus_path)?;
    if let Some(book) = exclude_book {
        corpus = corpus.exclude_book(book);
    }

    let additions: Vec<Sample> = match (t_copies, poisons_path) {
        (Some(t), None) => {
            let target_path = required_path(target_path, &config.paths.target, "target")?;
            config.paths.target = Some(target_path.clone());
            let target = load_target(&target_path)?;
            poisonkit_core::corpus::make_t_copies(&target, t).map_err(config_err)?
        }
        (None, _) => {
            let path = required_path(poisons_path, &config.paths.poisons, "poisons")?;
            config.paths.poisons = Some(path.clone());
            load_corpus(&path)?.samples().to_vec()
        }
        (Some(_), Some(_)) => {
            return Err(config_err(anyhow!(
                "--t-copies and --poisons are mutually exclusive"
            )))
        }
    };
    let config = &config;

    // Flags win over the config file; the two flags themselves are mutually
    // exclusive at parse time.
    let amount = match (count_flag, rate_flag) {
        (Some(c), _) => InjectionAmount::Count(c),
        (None, Some(r)) => InjectionAmount::Rate(r),
        (None, None) => match (config.attack.count, config.attack.rate) {
            (Some(_), Some(_)) => {
                return Err(config_err(anyhow!(
                    "attack.rate and attack.count are both set; keep exactly one"
                )))
            }
            (Some(c), None) => InjectionAmount::Count(c),
            (None, Some(r)) => InjectionAmount::Rate(r),
            (None, None) => {
                return Err(config_err(anyhow!("set attack.rate or attack.count")))
            }
        },
    };

    let poisoned = corpus
        .inject(&additions, amount, config.attack.seed)
        .map_err(runtime_err)?;
    let dir = out_dir(config)?;
    poisoned
        .save_jsonl(dir.join("corpus.jsonl"))
        .map_err(runtime_err)?;
    let manifest = poisoned.manifest().expect("inject always sets a manifest");
    write_json(
        &dir.join("inject_manifest.json"),
        &InjectOutput {
            run_id: config.run_id.clone(),
            manifest: manifest.clone(),
            config: config.clone(),
        },
    )?;
    println!(
        "injected {} of {} additions into {} samples -> {}",
        manifest.count,
        additions.len(),
        poisoned.len(),
        dir.join("corpus.jsonl").display()
    );
    Ok(())
}

#[derive(Serialize)]
struct EvalSummaryRow {
    scope: String,
    seed: Option<u64>,
    rouge_l_max: f64,
    edit_sim_max: f64,
    embed_cos_max: Option<f64>,
    rouge_l_avg: f64,
    edit_sim_avg: f64,
    embed_cos_avg: Option<f64>,
}

fn summary_rows(report: &MetricReport) -> Vec<EvalSummaryRow> {
    let row = |scope: String, seed, max: &SimilarityScores, avg: &SimilarityScores| EvalSummaryRow {
        scope,
        seed,
        rouge_l_max: max.rouge_l,
        edit_sim_max: max.edit_sim,
        embed_cos_max: max.embed_cos,
        rouge_l_avg: avg.rouge_l,
        edit_sim_avg: avg.edit_sim,
        embed_cos_avg: avg.embed_cos,
    };
    let mut rows: Vec<EvalSummaryRow> = report
        .per_seed
        .iter()
        .map(|s| row("seed".into(), Some(s.seed), &s.max, &s.avg))
        .collect();
    rows.push(row("mean_over_seeds".into(), None, &report.max, &report.avg));
    rows
}

pub fn cmd_eval(
    config: &RunConfig,
    target_path: &Option<PathBuf>,
    seeds_flag: &Option<Vec<u64>>,
) -> CliResult<()> {
    let target_path = required_path(target_path, &config.paths.target, "target")?;
    let mut config = config.clone();
    config.paths.target = Some(target_path.clone());
    if let Some(seeds) = seeds_flag {
        config.eval.seeds = seeds.clone();
    }
    let config = &config;
    let target = load_target(&target_path)?;
    let backend = config.build_backend().map_err(config_err)?;
    let seeds = config.eval.seeds.clone();
    let params = config.generation_params();
    let dir = out_dir(config)?;

    match evaluate_memorization(
        backend.as_ref(),
        &target,
        config.eval.n_generations,
        &params,
        &seeds,
        &config.run_id,
    ) {
        Ok(report) => {
            write_json(&dir.join("report.json"), &WithConfig::new(&report, config))?;
            write_csv(&dir.join("report_summary.csv"), &summary_rows(&report))?;
            println!(
                "eval complete: max rouge {:.4}, max edit {:.4} -> {}",
                report.max.rouge_l,
                report.max.edit_sim,
                dir.join("report.json").display()
            );
            Ok(())
        }
        Err(CoreError::EvalAborted { reason, partial }) => {
            write_json(
                &dir.join("report_partial.json"),
                &WithConfig::new(partial.as_ref(), config),
            )?;
            Err(runtime_err(anyhow!(
                "evaluation aborted ({reason}); partial results flagged invalid in report_partial.json"
            )))
        }
        Err(e) => Err(runtime_err(e)),
    }
}

/// Wrapper that embeds the resolved config next to any payload.
#[derive(Serialize)]
struct WithConfig<'a, T: Serialize> {
    #[serde(flatten)]
    payload: &'a T,
    config: &'a RunConfig,
}

impl<'a, T: Serialize> WithConfig<'a, T> {
    fn new(payload: &'a T, config: &'a RunConfig) -> Self {
        WithConfig { payload, config }
    }
}

#[derive(Serialize)]
struct MiaScoreRow {
    sample_id: String,
    method: &'static str,
    value: f64,
    role: String,
}

#[derive(Serialize)]
struct MethodCalibration {
    method: &'static str,
    target_score: f64,
    threshold: f64,
    recall: f64,
    member_count: usize,
}

#[derive(Serialize)]
struct CalibrationReport {
    run_id: String,
    min_k_percent: f64,
    methods: Vec<MethodCalibration>,
    config: RunConfig,
}

pub fn cmd_mia(
    config: &RunConfig,
    corpus_path: &Option<PathBuf>,
    target_path: &Option<PathBuf>,
) -> CliResult<()> {
    let corpus_path = required_path(corpus_path, &config.paths.corpus, "corpus")?;
    let target_path = required_path(target_path, &config.paths.target, "target")?;
    let mut config = config.clone();
    config.paths.corpus = Some(corpus_path.clone());
    config.paths.target = Some(target_path.clone());
    let config = &config;
    let corpus = load_corpus(&corpus_path)?;
    if corpus.is_empty() {
        return Err(runtime_err(anyhow!("corpus {} is empty", corpus_path.display())));
    }
    let target = load_target(&target_path)?;
    let backend = config.build_backend().map_err(config_err)?;
    if !backend.supports_logprobs() {
        return Err(config_err(anyhow!(
            "the configured backend does not expose token logprobs"
        )));
    }
    let k_percent = config.mia.min_k_percent;

    let score_text = |text: &str| -> poisonkit_core::Result<Vec<(MiaMethod, f64)>> {
        let lp = backend.score_logprobs(text)?;
        let lp_lower = backend.score_logprobs(&text.to_lowercase())?;
        score_all(&lp, &lp_lower, text, k_percent)
    };

    let mut rows: Vec<MiaScoreRow> = Vec::new();
    let mut member_scores: Vec<(MiaMethod, Vec<f64>)> = MiaMethod::ALL
        .iter()
        .map(|m| (*m, Vec::with_capacity(corpus.len())))
        .collect();
    for sample in corpus.samples() {
        let scores = score_text(sample.text()).map_err(runtime_err)?;
        for (method, value) in scores {
            rows.push(MiaScoreRow {
                sample_id: sample.id().to_string(),
                method: method.name(),
                value,
                role: sample.role().to_string(),
            });
            member_scores
                .iter_mut()
                .find(|(m, _)| *m == method)
                .expect("method list is fixed")
                .1
                .push(value);
        }
    }
    let target_scores = score_text(target.text()).map_err(runtime_err)?;

    let mut methods = Vec::new();
    for (method, target_value) in &target_scores {
        let members = &member_scores
            .iter()
            .find(|(m, _)| m == method)
            .expect("method list is fixed")
            .1;
        let result = calibrate(members, *target_value).map_err(runtime_err)?;
        methods.push(MethodCalibration {
            method: method.name(),
            target_score: *target_value,
            threshold: result.threshold,
            recall: result.recall,
            member_count: result.member_count,
        });
    }

    let dir = out_dir(config)?;
    write_csv(&dir.join("mia_scores.csv"), &rows)?;
    write_json(
        &dir.join("calibration.json"),
        &CalibrationReport {
            run_id: config.run_id.clone(),
            min_k_percent: k_percent,
            methods,
            config: config.clone(),
        },
    )?;
    println!(
        "scored {} samples with 4 methods -> {}",
        corpus.len(),
        dir.join("mia_scores.csv").display()
    );
    Ok(())
}

#[derive(Serialize)]
struct ScoreRow {
    sample_id: String,
    value: f64,
    role: String,
}

fn score_rows(scores: &[SampleScore]) -> Vec<ScoreRow> {
    scores
        .iter()
        .map(|s| ScoreRow {
            sample_id: s.id.clone(),
            value: s.value,
            role: s.role.to_string(),
        })
        .collect()
}

pub fn cmd_defend_ppl(config: &RunConfig, corpus_path: &Option<PathBuf>) -> CliResult<()> {
    let corpus_path = required_path(corpus_path, &config.paths.corpus, "corpus")?;
    let mut config = config.clone();
    config.paths.corpus = Some(corpus_path.clone());
    let config = &config;
    let corpus = load_corpus(&corpus_path)?;
    let backend = config.build_backend().map_err(config_err)?;
    if !backend.supports_logprobs() {
        return Err(config_err(anyhow!(
            "the configured backend does not expose token logprobs"
        )));
    }
    let scores: Vec<SampleScore> = corpus
        .samples()
        .iter()
        .map(|s| -> poisonkit_core::Result<SampleScore> {
            Ok(SampleScore {
                id: s.id().to_string(),
                value: perplexity(&backend.score_logprobs(s.text())?)?,
                role: s.role(),
            })
        })
        .collect::<poisonkit_core::Result<_>>()
        .map_err(runtime_err)?;
    let thresholds = resolve_thresholds(config, &scores);
    let curve = perplexity_filter_curve(&scores, &thresholds).map_err(runtime_err)?;

    let dir = out_dir(config)?;
    write_csv(&dir.join("ppl_scores.csv"), &score_rows(&scores))?;
    write_csv(&dir.join("ppl_curve.csv"), &curve_rows(&curve))?;
    println!(
        "perplexity sweep over {} thresholds -> {}",
        curve.points.len(),
        dir.join("ppl_curve.csv").display()
    );
    Ok(())
}

pub fn cmd_defend_trap(config: &RunConfig, corpus_path: &Option<PathBuf>) -> CliResult<()> {
    let corpus_path = required_path(corpus_path, &config.paths.corpus, "corpus")?;
    let mut config = config.clone();
    config.paths.corpus = Some(corpus_path.clone());
    let config = &config;
    let corpus = load_corpus(&corpus_path)?;
    let scores = trap_scores(&corpus, config.defense.ngram_n).map_err(runtime_err)?;
    let thresholds = resolve_thresholds(config, &scores);
    let curve = trap_filter_curve(&corpus, config.defense.ngram_n, &thresholds).map_err(runtime_err)?;

    let dir = out_dir(config)?;
    write_csv(&dir.join("trap_scores.csv"), &score_rows(&scores))?;
    write_csv(&dir.join("trap_curve.csv"), &curve_rows(&curve))?;
    println!(
        "trap sweep (n={}) over {} thresholds -> {}",
        config.defense.ngram_n,
        curve.points.len(),
        dir.join("trap_curve.csv").display()
    );
    Ok(())
}

#[derive(Deserialize)]
struct TokenDoc {
    id: String,
    token_ids: Vec<u32>,
}

#[derive(Serialize)]
struct MaskedDoc {
    id: String,
    token_ids: Vec<u32>,
    mask: Vec<bool>,
}

pub fn cmd_goldfish_mask(
    config: &RunConfig,
    tokens_path: &Option<PathBuf>,
    salt_flag: Option<u64>,
) -> CliResult<()> {
    let tokens_path = required_path(tokens_path, &config.paths.tokens, "tokens")?;
    let mut config = config.clone();
    config.paths.tokens = Some(tokens_path.clone());
    if let Some(salt) = salt_flag {
        config.defense.goldfish_salt = salt;
    }
    let config = &config;
    let file = std::fs::File::open(&tokens_path)
        .with_context(|| format!("reading {}", tokens_path.display()))
        .map_err(runtime_err)?;
    let (h, k) = (config.defense.goldfish_h, config.defense.goldfish_k);
    let salt = config.defense.goldfish_salt;

    let dir = out_dir(config)?;
    let out_path = dir.join("masks.jsonl");
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(&out_path)
            .with_context(|| format!("writing {}", out_path.display()))
            .map_err(runtime_err)?,
    );
    let mut docs = 0usize;
    for line in std::io::BufReader::new(file).lines() {
        let line = line.map_err(runtime_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: TokenDoc = serde_json::from_str(&line)
            .with_context(|| format!("parsing {}", tokens_path.display()))
            .map_err(runtime_err)?;
        let mask = goldfish_mask(&doc.token_ids, h, k, salt).map_err(runtime_err)?;
        let masked = MaskedDoc {
            id: doc.id,
            token_ids: doc.token_ids,
            mask,
        };
        serde_json::to_writer(&mut out, &masked).map_err(runtime_err)?;
        out.write_all(b"\n").map_err(runtime_err)?;
        docs += 1;
    }
    out.flush().map_err(runtime_err)?;
    println!("masked {docs} documents (h={h}, k={k}) -> {}", out_path.display());
    Ok(())
}

#[derive(Serialize)]
struct StealthRow {
    group: String,
    count: usize,
    rouge_mean: f64,
    rouge_std: f64,
    edit_mean: f64,
    edit_std: f64,
    cos_mean: Option<f64>,
    cos_std: Option<f64>,
}

pub fn cmd_stealth(
    config: &RunConfig,
    poisons_path: &Option<PathBuf>,
    manifest_path: &Option<PathBuf>,
    corpus_path: &Option<PathBuf>,
    target_path: &Option<PathBuf>,
    paraphrases_path: &Option<PathBuf>,
) -> CliResult<()> {
    let poisons_path = required_path(poisons_path, &config.paths.poisons, "poisons")?;
    let manifest_path = required_path(manifest_path, &config.paths.craft_manifest, "craft-manifest")?;
    let corpus_path = required_path(corpus_path, &config.paths.corpus, "corpus")?;
    let target_path = required_path(target_path, &config.paths.target, "target")?;
    let mut config = config.clone();
    config.paths.poisons = Some(poisons_path.clone());
    config.paths.craft_manifest = Some(manifest_path.clone());
    config.paths.corpus = Some(corpus_path.clone());
    config.paths.target = Some(target_path.clone());
    let paraphrases_file = paraphrases_path.clone().or(config.paths.paraphrases.clone());
    config.paths.paraphrases = paraphrases_file.clone();
    let config = &config;

    let target = load_target(&target_path)?;
    let poison_corpus = load_corpus(&poisons_path)?;
    let manifest: CraftManifest = serde_json::from_str(
        &std::fs::read_to_string(&manifest_path)
            .with_context(|| format!("reading {}", manifest_path.display()))
            .map_err(runtime_err)?,
    )
    .with_context(|| format!("parsing {}", manifest_path.display()))
    .map_err(runtime_err)?;

    // Rebuild full poison records from the sample file plus the manifest.
    let cgrams = extract_cgrams(&target, manifest.c).map_err(runtime_err)?;
    let mut records = Vec::with_capacity(poison_corpus.len());
    for sample in poison_corpus.samples() {
        let entry = manifest
            .records
            .iter()
            .find(|r| r.id == sample.id())
            .ok_or_else(|| {
                runtime_err(anyhow!("sample {} missing from craft manifest", sample.id()))
            })?;
        let cgram = cgrams
            .get(entry.window_index - 1)
            .ok_or_else(|| runtime_err(anyhow!("window {} out of range", entry.window_index)))?
            .clone();
        records.push(PoisonRecord {
            sample: sample.clone(),
            cgram,
            attempts: entry.attempts,
            generator_id: manifest.generator_id.clone(),
        });
    }

    let corpus = load_corpus(&corpus_path)?;
    let clean: Vec<Sample> = corpus
        .samples()
        .iter()
        .filter(|s| s.role() == poisonkit_core::corpus::Role::Clean)
        .cloned()
        .collect();

    let paraphrases: Vec<String> = match paraphrases_file {
        Some(path) => std::fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(runtime_err)?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect(),
        None => Vec::new(),
    };

    let backend = config.build_backend().map_err(config_err)?;
    let report = stealthiness_report(&records, &clean, &paraphrases, &target, Some(backend.as_ref()))
        .map_err(runtime_err)?;

    let dir = out_dir(config)?;
    write_json(&dir.join("stealth_report.json"), &WithConfig::new(&report, config))?;
    let rows: Vec<StealthRow> = report
        .groups
        .iter()
        .map(|g| StealthRow {
            group: g.label.clone(),
            count: g.count,
            rouge_mean: g.rouge_mean,
            rouge_std: g.rouge_std,
            edit_mean: g.edit_mean,
            edit_std: g.edit_std,
            cos_mean: g.cos_mean,
            cos_std: g.cos_std,
        })
        .collect();
    write_csv(&dir.join("stealth_report.csv"), &rows)?;
    print!("{report}");
    Ok(())
}

#[derive(Serialize)]
struct ComparisonCsvRow {
    label: String,
    seeds: usize,
    n_generations: usize,
    complete: bool,
    max_rouge_l: f64,
    max_edit_sim: f64,
    max_embed_cos: Option<f64>,
    avg_rouge_l: f64,
    avg_edit_sim: f64,
    avg_embed_cos: Option<f64>,
}

pub fn cmd_compare(
    config: &RunConfig,
    report_paths: &[PathBuf],
    labels: &[String],
) -> CliResult<()> {
    let mut reports = Vec::with_capacity(report_paths.len());
    for path in report_paths {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(runtime_err)?;
        let report: MetricReport = serde_json::from_str(&text)
            .with_context(|| format!("parsing {}", path.display()))
            .map_err(runtime_err)?;
        reports.push(report);
    }
    let table = compare_runs(&reports, labels).map_err(config_err)?;

    let dir = out_dir(config)?;
    let rows: Vec<ComparisonCsvRow> = table
        .rows
        .iter()
        .map(|r| ComparisonCsvRow {
            label: r.label.clone(),
            seeds: r.seeds,
            n_generations: r.n_generations,
            complete: r.complete,
            max_rouge_l: r.max.rouge_l,
            max_edit_sim: r.max.edit_sim,
            max_embed_cos: r.max.embed_cos,
            avg_rouge_l: r.avg.rouge_l,
            avg_edit_sim: r.avg.edit_sim,
            avg_embed_cos: r.avg.embed_cos,
        })
        .collect();
    write_csv(&dir.join("comparison.csv"), &rows)?;
    print!("{table}");
    Ok(())
}
