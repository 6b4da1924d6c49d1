//! Training-corpus handling: word tokenization, paragraph segmentation,
//! book exclusion, seeded poison injection and the exact-copies baseline.
//!
//! A corpus is an ordered list of [`Sample`]s plus optional injection
//! metadata. On disk it is JSON Lines, one sample object per line, with an
//! optional JSON manifest sidecar describing what was injected.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Provenance label of a corpus sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Clean,
    Poison,
    TargetCopy,
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Role::Clean => write!(f, "clean"),
            Role::Poison => write!(f, "poison"),
            Role::TargetCopy => write!(f, "target_copy"),
        }
    }
}

/// Split text on Unicode whitespace. Punctuation stays attached to its word
/// and empty tokens are dropped, so joining with single spaces and
/// re-tokenizing is idempotent.
pub fn word_tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_string).collect()
}

/// One corpus unit: a short span of text with provenance.
///
/// `words` is always `word_tokenize(text)`; constructors maintain this, which
/// is why the fields are read-only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    id: String,
    text: String,
    words: Vec<String>,
    book_id: Option<String>,
    role: Role,
}

/// On-disk form of a sample. `words` is derived, not stored.
#[derive(Debug, Serialize, Deserialize)]
struct SampleRecord {
    id: String,
    text: String,
    book_id: Option<String>,
    role: Role,
}

impl Sample {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        book_id: Option<String>,
        role: Role,
    ) -> Self {
        let text = text.into();
        let words = word_tokenize(&text);
        Sample {
            id: id.into(),
            text,
            words,
            book_id,
            role,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn book_id(&self) -> Option<&str> {
        self.book_id.as_deref()
    }

    pub fn role(&self) -> Role {
        self.role
    }

    fn to_record(&self) -> SampleRecord {
        SampleRecord {
            id: self.id.clone(),
            text: self.text.clone(),
            book_id: self.book_id.clone(),
            role: self.role,
        }
    }

    fn from_record(r: SampleRecord) -> Self {
        Sample::new(r.id, r.text, r.book_id, r.role)
    }
}

// Samples serialize through their wire record so `words` stays derived.
impl Serialize for Sample {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_record().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Sample {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        SampleRecord::deserialize(d).map(Sample::from_record)
    }
}

/// Input unit for segmentation: a paragraph of source text and the book it
/// came from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Paragraph {
    pub text: String,
    #[serde(default)]
    pub book_id: Option<String>,
}

/// Metadata recorded by [`Corpus::inject`]: enough to replay or audit an
/// injection run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionManifest {
    pub seed: u64,
    pub rate: Option<f64>,
    pub count: usize,
    pub poison_ids: Vec<String>,
}

/// An ordered, immutable collection of samples.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    samples: Vec<Sample>,
    manifest: Option<InjectionManifest>,
}

/// How much to inject: a fraction of the clean samples, or an exact count.
#[derive(Debug, Clone, Copy)]
pub enum InjectionAmount {
    Rate(f64),
    Count(usize),
}

impl Corpus {
    /// Build from samples, checking id uniqueness.
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        let mut seen = std::collections::HashSet::with_capacity(samples.len());
        for s in &samples {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate sample id {:?}", s.id)));
            }
        }
        Ok(Corpus {
            samples,
            manifest: None,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn manifest(&self) -> Option<&InjectionManifest> {
        self.manifest.as_ref()
    }

    /// Attach a manifest loaded from a sidecar file. Every recorded id must
    /// exist in the corpus with a non-clean role.
    pub fn with_manifest(mut self, manifest: InjectionManifest) -> Result<Self> {
        for id in &manifest.poison_ids {
            match self.samples.iter().find(|s| &s.id == id) {
                None => {
                    return Err(Error::InvalidInput(format!(
                        "manifest references unknown sample id {id:?}"
                    )))
                }
                Some(s) if s.role == Role::Clean => {
                    return Err(Error::InvalidInput(format!(
                        "manifest lists clean sample {id:?} as injected"
                    )))
                }
                Some(_) => {}
            }
        }
        self.manifest = Some(manifest);
        Ok(self)
    }

    pub fn count_role(&self, role: Role) -> usize {
        self.samples.iter().filter(|s| s.role == role).count()
    }

    /// Drop every sample attributed to `book_id`, preserving order otherwise.
    /// An unknown book id leaves the corpus unchanged.
    pub fn exclude_book(&self, book_id: &str) -> Corpus {
        let samples: Vec<Sample> = self
            .samples
            .iter()
            .filter(|s| s.book_id.as_deref() != Some(book_id))
            .cloned()
            .collect();
        let manifest = self.manifest.clone().map(|mut m| {
            m.poison_ids.retain(|id| samples.iter().any(|s| &s.id == id));
            m
        });
        Corpus { samples, manifest }
    }

    /// Insert the first `count` of `additions` at seeded-uniform positions.
    ///
    /// With `InjectionAmount::Rate(r)` the count is `round(r * clean_samples)`
    /// rounded half up. The result records an [`InjectionManifest`] and is
    /// byte-identical for a fixed seed.
    pub fn inject(
        &self,
        additions: &[Sample],
        amount: InjectionAmount,
        seed: u64,
    ) -> Result<Corpus> {
        let (count, rate) = match amount {
            InjectionAmount::Rate(r) => {
                if !(r > 0.0 && r < 1.0) {
                    return Err(Error::InvalidInput(format!(
                        "injection rate must be in (0, 1), got {r}"
                    )));
                }
                let clean = self.count_role(Role::Clean) as f64;
                ((clean * r + 0.5).floor() as usize, Some(r))
            }
            InjectionAmount::Count(c) => (c, None),
        };
        if count == 0 {
            return Err(Error::InvalidInput(
                "injection count must be at least 1".into(),
            ));
        }
        if count > additions.len() {
            return Err(Error::InsufficientPoisons {
                requested: count,
                available: additions.len(),
            });
        }

        let mut samples = self.samples.clone();
        let positions = injection_positions(seed, samples.len(), count);
        let mut poison_ids = Vec::with_capacity(count);
        for (addition, &pos) in additions[..count].iter().zip(&positions) {
            samples.insert(pos, addition.clone());
            poison_ids.push(addition.id.clone());
        }

        let mut corpus = Corpus::new(samples)?;
        corpus.manifest = Some(InjectionManifest {
            seed,
            rate,
            count,
            poison_ids,
        });
        Ok(corpus)
    }

    /// Serialize as JSON Lines, one sample per line.
    pub fn write_jsonl(&self, mut w: impl Write) -> Result<()> {
        for s in &self.samples {
            serde_json::to_writer(&mut w, &s.to_record())?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl(r: impl BufRead) -> Result<Corpus> {
        let mut samples = Vec::new();
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: SampleRecord = serde_json::from_str(&line)?;
            samples.push(Sample::from_record(record));
        }
        Corpus::new(samples)
    }

    pub fn save_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_jsonl(std::io::BufWriter::new(file))
    }

    pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Corpus> {
        let file = std::fs::File::open(path)?;
        Corpus::read_jsonl(std::io::BufReader::new(file))
    }
}

/// The insertion position sequence for an injection run: position `i` is
/// uniform over the list as it stands after `i` prior insertions. Pure in
/// `(seed, base_len, count)`.
pub fn injection_positions(seed: u64, base_len: usize, count: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| rng.random_range(0..=base_len + i))
        .collect()
}

/// Chunk paragraphs into consecutive non-overlapping samples of exactly
/// `words_per_sample` words; a short trailing remainder is dropped. Samples
/// inherit the paragraph's book id.
pub fn segment_paragraphs(paragraphs: &[Paragraph], words_per_sample: usize) -> Result<Vec<Sample>> {
    if words_per_sample == 0 {
        return Err(Error::InvalidInput(
            "words_per_sample must be at least 1".into(),
        ));
    }
    let mut samples = Vec::new();
    for (pidx, para) in paragraphs.iter().enumerate() {
        let words = word_tokenize(&para.text);
        for (cidx, chunk) in words.chunks_exact(words_per_sample).enumerate() {
            let id = match &para.book_id {
                Some(b) => format!("{b}-p{pidx:05}-w{cidx:03}"),
                None => format!("p{pidx:05}-w{cidx:03}"),
            };
            samples.push(Sample::new(
                id,
                chunk.join(" "),
                para.book_id.clone(),
                Role::Clean,
            ));
        }
    }
    Ok(samples)
}

/// The text the attacker wants regurgitated, with its prefix split point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetSpec {
    text: String,
    words: Vec<String>,
    book_id: String,
    prefix_fraction: f64,
}

/// On-disk form of a target spec.
#[derive(Debug, Deserialize)]
struct TargetSpecFile {
    text: String,
    book_id: String,
    #[serde(default = "default_prefix_fraction")]
    prefix_fraction: f64,
}

fn default_prefix_fraction() -> f64 {
    0.25
}

impl TargetSpec {
    pub const DEFAULT_PREFIX_FRACTION: f64 = 0.25;

    pub fn new(
        text: impl Into<String>,
        book_id: impl Into<String>,
        prefix_fraction: f64,
    ) -> Result<Self> {
        let text = text.into();
        let words = word_tokenize(&text);
        if words.is_empty() {
            return Err(Error::InvalidInput("target text has no words".into()));
        }
        if !(prefix_fraction > 0.0 && prefix_fraction < 1.0) {
            return Err(Error::InvalidInput(format!(
                "prefix_fraction must be in (0, 1), got {prefix_fraction}"
            )));
        }
        Ok(TargetSpec {
            text,
            words,
            book_id: book_id.into(),
            prefix_fraction,
        })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Number of words in the target.
    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    pub fn book_id(&self) -> &str {
        &self.book_id
    }

    pub fn prefix_fraction(&self) -> f64 {
        self.prefix_fraction
    }
}

impl TryFrom<TargetSpecFile> for TargetSpec {
    type Error = Error;

    fn try_from(f: TargetSpecFile) -> Result<Self> {
        TargetSpec::new(f.text, f.book_id, f.prefix_fraction)
    }
}

impl<'de> Deserialize<'de> for TargetSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let file = TargetSpecFile::deserialize(d)?;
        TargetSpec::try_from(file).map_err(serde::de::Error::custom)
    }
}

/// `t` exact copies of the target, labeled [`Role::TargetCopy`] — the
/// unstealthy upper-bound attack.
pub fn make_t_copies(target: &TargetSpec, t: usize) -> Result<Vec<Sample>> {
    if t == 0 {
        return Err(Error::InvalidInput("t must be at least 1".into()));
    }
    Ok((0..t)
        .map(|i| {
            Sample::new(
                format!("tcopy-{i:04}"),
                target.text(),
                Some(target.book_id().to_string()),
                Role::TargetCopy,
            )
        })
        .collect())
}
