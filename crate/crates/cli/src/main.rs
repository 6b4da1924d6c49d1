//! `poisonkit` — craft fragment-embedding poison samples, inject them into a
//! JSONL corpus, score memorization of a target text, run membership
//! inference, and sweep the filtering defenses.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration error.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::{BackendKind, RunConfig};

pub enum CliError {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "poisonkit",
    version,
    about = "Copyright-poisoning pipeline and countermeasures for text corpora",
    after_help = "Settings come from --config (TOML), with flags overriding file values.\n\
                  Every subcommand documents the config keys it reads in its own --help."
)]
struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Backend for generation/scoring/embeddings (config: backend.kind).
    #[arg(long, global = true, value_enum)]
    backend: Option<BackendKind>,

    /// c-gram window size (config: attack.c).
    #[arg(long = "c", global = true, value_name = "WORDS")]
    c: Option<usize>,

    /// Poison budget (config: attack.k).
    #[arg(long = "K", global = true, value_name = "COUNT")]
    k: Option<usize>,

    /// Injection rate in (0,1) (config: attack.rate).
    #[arg(long, global = true, conflicts_with = "count")]
    rate: Option<f64>,

    /// Exact injection count (config: attack.count).
    #[arg(long, global = true)]
    count: Option<usize>,

    /// Master seed for crafting/injection (config: attack.seed).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Completions per seed during eval (config: eval.n_generations).
    #[arg(long, global = true)]
    n_generations: Option<usize>,

    /// Sampling temperature (config: eval.temperature).
    #[arg(long, global = true)]
    temperature: Option<f64>,

    /// Sampling top-k (config: eval.top_k).
    #[arg(long, global = true)]
    top_k: Option<u32>,

    /// Trap-filter n-gram width (config: defense.ngram_n).
    #[arg(long, global = true)]
    ngram_n: Option<usize>,

    /// Goldfish hash context length (config: defense.goldfish_h).
    #[arg(long, global = true)]
    goldfish_h: Option<usize>,

    /// Goldfish drop modulus (config: defense.goldfish_k).
    #[arg(long, global = true)]
    goldfish_k: Option<u64>,

    /// Output directory (config: paths.out; default ./out).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Chunk paragraphs into fixed-width word samples, dropping remainders.
    #[command(after_help = "Config keys read: run_id, attack.sample_words, paths.corpus, paths.out.\n\
                            Reads JSONL lines {\"text\", \"book_id\"?}; writes corpus.jsonl.")]
    Segment {
        /// Paragraph JSONL, one {"text", "book_id"?} object per line.
        #[arg(long)]
        paragraphs: Option<PathBuf>,
        /// Words per sample (default: attack.sample_words).
        #[arg(long)]
        words_per_sample: Option<usize>,
    },

    /// Craft poison samples that each embed one target c-gram verbatim.
    #[command(after_help = "Config keys read: run_id, backend.*, attack.c, attack.k, attack.seed, \
                            attack.max_retries, attack.sample_words, eval.temperature, eval.top_k, \
                            paths.target, paths.out.\n\
                            Writes poisons.jsonl and craft_manifest.json.")]
    Craft {
        /// Target spec JSON {"text", "book_id", "prefix_fraction"?} (config: paths.target).
        #[arg(long)]
        target: Option<PathBuf>,
    },

    /// Inject poison samples (or exact target copies) into a corpus.
    #[command(after_help = "Config keys read: run_id, attack.seed, attack.rate OR attack.count, \
                            paths.corpus, paths.poisons, paths.target, paths.out.\n\
                            Writes corpus.jsonl and inject_manifest.json.")]
    Inject {
        /// Clean corpus JSONL (config: paths.corpus).
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Poison JSONL to inject from (config: paths.poisons).
        #[arg(long)]
        poisons: Option<PathBuf>,
        /// Inject this many exact copies of the target instead of poisons.
        #[arg(long, value_name = "T", conflicts_with = "poisons")]
        t_copies: Option<usize>,
        /// Target spec, required with --t-copies (config: paths.target).
        #[arg(long)]
        target: Option<PathBuf>,
        /// Drop every sample from this book before injecting.
        #[arg(long, value_name = "BOOK_ID")]
        exclude_book: Option<String>,
    },

    /// Generate completions of the target prefix and score memorization.
    #[command(after_help = "Config keys read: run_id, backend.*, eval.n_generations, \
                            eval.temperature, eval.top_k, eval.seeds, paths.target, paths.out.\n\
                            Writes report.json and report_summary.csv; an aborted run leaves \
                            report_partial.json flagged incomplete.")]
    Eval {
        /// Target spec JSON (config: paths.target).
        #[arg(long)]
        target: Option<PathBuf>,
        /// Comma-separated seed list (config: eval.seeds).
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },

    /// Score membership inference over a corpus and calibrate thresholds.
    #[command(after_help = "Config keys read: run_id, backend.*, mia.min_k_percent, \
                            paths.corpus, paths.target, paths.out.\n\
                            Writes mia_scores.csv and calibration.json.")]
    Mia {
        /// Member corpus JSONL (config: paths.corpus).
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Target spec JSON (config: paths.target).
        #[arg(long)]
        target: Option<PathBuf>,
    },

    /// Sweep a perplexity-filtering defense over a poisoned corpus.
    #[command(name = "defend-ppl")]
    #[command(after_help = "Config keys read: run_id, backend.*, defense.thresholds, \
                            paths.corpus, paths.out.\n\
                            Writes ppl_scores.csv and ppl_curve.csv.")]
    DefendPpl {
        /// Poisoned corpus JSONL with clean and poison roles (config: paths.corpus).
        #[arg(long)]
        corpus: Option<PathBuf>,
    },

    /// Sweep the n-gram h-index trap filter over a poisoned corpus.
    #[command(name = "defend-trap")]
    #[command(after_help = "Config keys read: run_id, defense.ngram_n, defense.thresholds, \
                            paths.corpus, paths.out.\n\
                            Writes trap_scores.csv and trap_curve.csv.")]
    DefendTrap {
        /// Poisoned corpus JSONL with clean and poison roles (config: paths.corpus).
        #[arg(long)]
        corpus: Option<PathBuf>,
    },

    /// Compute goldfish loss masks for token-id documents.
    #[command(name = "goldfish-mask")]
    #[command(after_help = "Config keys read: run_id, defense.goldfish_h, defense.goldfish_k, \
                            defense.goldfish_salt, paths.tokens, paths.out.\n\
                            Reads JSONL lines {\"id\", \"token_ids\"}; writes masks.jsonl.")]
    GoldfishMask {
        /// Token documents JSONL (config: paths.tokens).
        #[arg(long)]
        tokens: Option<PathBuf>,
        /// Per-run hash salt (config: defense.goldfish_salt).
        #[arg(long)]
        goldfish_salt: Option<u64>,
    },

    /// Compare poison/clean/paraphrase similarity against the target.
    #[command(after_help = "Config keys read: run_id, backend.*, paths.poisons, \
                            paths.craft_manifest, paths.corpus, paths.target, paths.paraphrases, \
                            paths.out.\n\
                            Writes stealth_report.json and stealth_report.csv.")]
    Stealth {
        /// Poison JSONL from `craft` (config: paths.poisons).
        #[arg(long)]
        poisons: Option<PathBuf>,
        /// craft_manifest.json from the same run (config: paths.craft_manifest).
        #[arg(long)]
        craft_manifest: Option<PathBuf>,
        /// Corpus providing the clean group (config: paths.corpus).
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Target spec JSON (config: paths.target).
        #[arg(long)]
        target: Option<PathBuf>,
        /// Optional paraphrase file, one per line (config: paths.paraphrases).
        #[arg(long)]
        paraphrases: Option<PathBuf>,
    },

    /// Put several eval reports side by side.
    #[command(after_help = "Config keys read: run_id, paths.out.\n\
                            Writes comparison.csv and prints the table.")]
    Compare {
        /// Report JSON files from `eval`.
        #[arg(long, num_args = 1.., required = true)]
        reports: Vec<PathBuf>,
        /// One unique label per report.
        #[arg(long, num_args = 1.., required = true)]
        labels: Vec<String>,
    },
}

/// Load the config file (if any) and fold the global flag overrides in.
fn resolve_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(CliError::Config)?,
        None => RunConfig::default(),
    };
    if let Some(kind) = cli.backend {
        config.backend.kind = kind;
    }
    if let Some(c) = cli.c {
        config.attack.c = c;
    }
    if let Some(k) = cli.k {
        config.attack.k = k;
    }
    if let Some(rate) = cli.rate {
        config.attack.rate = Some(rate);
        config.attack.count = None;
    }
    if let Some(count) = cli.count {
        config.attack.count = Some(count);
        config.attack.rate = None;
    }
    if let Some(seed) = cli.seed {
        config.attack.seed = seed;
    }
    if let Some(n) = cli.n_generations {
        config.eval.n_generations = n;
    }
    if let Some(t) = cli.temperature {
        config.eval.temperature = t;
    }
    if let Some(k) = cli.top_k {
        config.eval.top_k = k;
    }
    if let Some(n) = cli.ngram_n {
        config.defense.ngram_n = n;
    }
    if let Some(h) = cli.goldfish_h {
        config.defense.goldfish_h = h;
    }
    if let Some(k) = cli.goldfish_k {
        config.defense.goldfish_k = k;
    }
    if let Some(out) = &cli.out {
        config.paths.out = Some(out.clone());
    }
    Ok(config)
}

fn run(cli: Cli) -> CliResult<()> {
    let config = resolve_config(&cli)?;
    match &cli.command {
        Command::Segment {
            paragraphs,
            words_per_sample,
        } => commands::cmd_segment(&config, paragraphs, *words_per_sample),
        Command::Craft { target } => commands::cmd_craft(&config, target),
        Command::Inject {
            corpus,
            poisons,
            t_copies,
            target,
            exclude_book,
        } => commands::cmd_inject(
            &config,
            corpus,
            poisons,
            *t_copies,
            target,
            exclude_book,
            cli.rate,
            cli.count,
        ),
        Command::Eval { target, seeds } => commands::cmd_eval(&config, target, seeds),
        Command::Mia { corpus, target } => commands::cmd_mia(&config, corpus, target),
        Command::DefendPpl { corpus } => commands::cmd_defend_ppl(&config, corpus),
        Command::DefendTrap { corpus } => commands::cmd_defend_trap(&config, corpus),
        Command::GoldfishMask {
            tokens,
            goldfish_salt,
        } => commands::cmd_goldfish_mask(&config, tokens, *goldfish_salt),
        Command::Stealth {
            poisons,
            craft_manifest,
            corpus,
            target,
            paraphrases,
        } => commands::cmd_stealth(&config, poisons, craft_manifest, corpus, target, paraphrases),
        Command::Compare { reports, labels } => commands::cmd_compare(&config, reports, labels),
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(CliError::Config(e)) => {
            eprintln!("config error: {e:#}");
            std::process::exit(2);
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}
