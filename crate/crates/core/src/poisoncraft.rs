//! Poison crafting: generate training samples that each embed one c-gram of
//! the target text verbatim.
//!
//! A c-gram is a window of `c` consecutive target words, extracted with
//! stride 1. Crafting walks the windows cyclically (window `((i-1) mod
//! (n-c+1)) + 1` for poison `i`), prompts a generation backend to produce a
//! paragraph containing the window verbatim, re-generates on failure, and
//! randomly crops the result to the corpus sample length while keeping the
//! c-gram inside the crop.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{word_tokenize, Role, Sample, TargetSpec};
use crate::stablehash::{fnv1a_64, mix_u64};
use crate::textgen::{GenerationParams, TextBackend};
use crate::{Error, Result};

/// First sentence of the generation prompt, up to the inserted c-gram.
pub const PROMPT_PREFIX: &str =
    "Generate one paragraph at least 32 words long containing the following text verbatim: ";
/// Second sentence of the generation prompt, after the inserted c-gram.
pub const PROMPT_SUFFIX: &str = "Don't include any additional text other than the paragraph.";

/// A window of `c` consecutive words from the target, with its 1-based start
/// position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CGram {
    words: Vec<String>,
    window_index: usize,
}

impl CGram {
    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// 1-based start position `j` of this window in the target.
    pub fn window_index(&self) -> usize {
        self.window_index
    }

    pub fn c(&self) -> usize {
        self.words.len()
    }

    pub fn joined(&self) -> String {
        self.words.join(" ")
    }
}

/// One crafted poison: the cropped sample, the c-gram it embeds, and how many
/// generations it took.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoisonRecord {
    pub sample: Sample,
    pub cgram: CGram,
    pub attempts: u32,
    pub generator_id: String,
}

/// All `n - c + 1` overlapping c-grams of the target, in window order.
pub fn extract_cgrams(target: &TargetSpec, c: usize) -> Result<Vec<CGram>> {
    let n = target.word_count();
    if c == 0 {
        return Err(Error::InvalidInput("c must be at least 1".into()));
    }
    if c > n {
        return Err(Error::WindowExceedsTarget { c, n });
    }
    Ok(target
        .words()
        .windows(c)
        .enumerate()
        .map(|(i, w)| CGram {
            words: w.to_vec(),
            window_index: i + 1,
        })
        .collect())
}

/// The instruction prompt for one c-gram: the fixed first sentence, the
/// c-gram words joined by single spaces, then the fixed second sentence.
pub fn build_prompt(cgram: &CGram) -> String {
    format!("{PROMPT_PREFIX}{} {PROMPT_SUFFIX}", cgram.joined())
}

/// Recover the span a prompt built by [`build_prompt`] asked for. Returns
/// `None` for prompts that don't match the template. Used by the offline stub
/// to honor the verbatim requirement.
pub fn extract_prompt_span(prompt: &str) -> Option<&str> {
    prompt
        .strip_prefix(PROMPT_PREFIX)?
        .strip_suffix(PROMPT_SUFFIX)?
        .strip_suffix(' ')
}

/// True iff the c-gram's words occur as consecutive word tokens of `text`,
/// compared case-sensitively after tokenization.
pub fn contains_verbatim(text: &str, cgram: &CGram) -> bool {
    let tokens = word_tokenize(text);
    let found = find_occurrences(&tokens, cgram.words()).next().is_some();
    found
}

/// 0-based start indices of all occurrences of `needle` in `haystack`.
fn find_occurrences<'a>(
    haystack: &'a [String],
    needle: &'a [String],
) -> impl Iterator<Item = usize> + 'a {
    haystack
        .windows(needle.len())
        .enumerate()
        .filter(move |(_, w)| *w == needle)
        .map(|(i, _)| i)
}

/// Crop `text` to a contiguous window of `min(target_words, |text|)` words
/// that still contains the c-gram. The window start is seeded-uniform over
/// all starts covering an occurrence.
pub fn crop_preserving(
    text: &str,
    cgram: &CGram,
    target_words: usize,
    seed: u64,
) -> Result<String> {
    if target_words < cgram.c() {
        return Err(Error::InvalidInput(format!(
            "crop of {target_words} words cannot contain a {}-gram",
            cgram.c()
        )));
    }
    let tokens = word_tokenize(text);
    let width = target_words.min(tokens.len());
    let mut valid: Vec<usize> = Vec::new();
    for occ in find_occurrences(&tokens, cgram.words()) {
        // Window [s, s+width) must cover [occ, occ+c) and stay in bounds;
        // width >= c makes this range nonempty for every occurrence.
        let lo = (occ + cgram.c()).saturating_sub(width);
        let hi = occ.min(tokens.len() - width);
        valid.extend(lo..=hi);
    }
    valid.sort_unstable();
    valid.dedup();
    if valid.is_empty() {
        return Err(Error::InvalidInput(
            "text does not contain the c-gram to preserve".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = valid[rng.random_range(0..valid.len())];
    Ok(tokens[start..start + width].join(" "))
}

/// Knobs for [`craft`] beyond the generation parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CraftOptions {
    /// Generations allowed per window before aborting the run.
    pub max_retries: u32,
    /// Reject generations shorter than this many words.
    pub min_words: usize,
    /// Crop every accepted poison to this many words, matching the corpus
    /// sample length so poisons are indistinguishable by length.
    pub sample_words: usize,
}

impl Default for CraftOptions {
    fn default() -> Self {
        CraftOptions {
            max_retries: 8,
            min_words: 32,
            sample_words: 32,
        }
    }
}

/// Craft exactly `k` poisons against `target` with window size `c`.
///
/// Poison `i` (1-based) embeds the c-gram at window `((i-1) mod (n-c+1)) + 1`:
/// the sliding window resets to the start of the target when it reaches the
/// end. Every returned record passes [`contains_verbatim`] and the minimum
/// length rule, and no record's text equals the whole target. Record `i`'s
/// generation seeds derive from `(params.seed, i, attempt)`, so results are
/// reproducible with a deterministic backend regardless of how the requests
/// fan out across threads.
///
/// A window that exhausts `max_retries` aborts the whole run; skipping would
/// silently bias the window schedule.
pub fn craft(
    target: &TargetSpec,
    c: usize,
    k: usize,
    backend: &dyn TextBackend,
    params: &GenerationParams,
    options: &CraftOptions,
) -> Result<Vec<PoisonRecord>> {
    if k == 0 {
        return Err(Error::InvalidInput("poison budget must be at least 1".into()));
    }
    if options.max_retries == 0 {
        return Err(Error::InvalidInput("max_retries must be at least 1".into()));
    }
    if options.sample_words < c {
        return Err(Error::InvalidInput(format!(
            "sample_words {} is smaller than c {}",
            options.sample_words, c
        )));
    }
    if !backend.supports_generation() {
        return Err(Error::Unsupported("generation"));
    }
    params.validate()?;

    let cgrams = extract_cgrams(target, c)?;
    let windows = cgrams.len();
    let base_seed = params.seed.unwrap_or(0);

    (1..=k)
        .into_par_iter()
        .map(|i| {
            let cgram = &cgrams[(i - 1) % windows];
            craft_one(target, cgram, i, backend, params, options, base_seed)
        })
        .collect()
}

fn craft_one(
    target: &TargetSpec,
    cgram: &CGram,
    index: usize,
    backend: &dyn TextBackend,
    params: &GenerationParams,
    options: &CraftOptions,
    base_seed: u64,
) -> Result<PoisonRecord> {
    let prompt = build_prompt(cgram);
    for attempt in 1..=options.max_retries {
        let gen_seed = mix_u64(&[base_seed, index as u64, u64::from(attempt)]);
        let text = match backend.generate(&prompt, &params.with_seed(gen_seed)) {
            Ok(t) => t,
            Err(Error::EmptyGeneration) => continue,
            Err(e) => return Err(e),
        };
        if word_tokenize(&text).len() < options.min_words || !contains_verbatim(&text, cgram) {
            continue;
        }
        let crop_seed = mix_u64(&[gen_seed, fnv1a_64(b"crop")]);
        let cropped = crop_preserving(&text, cgram, options.sample_words, crop_seed)?;
        // Guard against accidental verbatim leakage of the whole target.
        if cropped == target.text() {
            continue;
        }
        let sample = Sample::new(
            format!("poison-{index:05}"),
            cropped,
            None,
            Role::Poison,
        );
        return Ok(PoisonRecord {
            sample,
            cgram: cgram.clone(),
            attempts: attempt,
            generator_id: backend.id().to_string(),
        });
    }
    Err(Error::CraftExhausted {
        window_index: cgram.window_index(),
        attempts: options.max_retries,
    })
}
