//! Deterministic offline backend.
//!
//! Every capability is a pure function of the request inputs and the
//! backend's salt, keyed through FNV-1a and ChaCha8 so outputs are
//! bit-identical across runs and platforms. Generation produces loosely
//! grammatical filler from fixed word pools; when the prompt matches the
//! poison-generation template, the requested span is embedded verbatim at a
//! seeded position.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::word_tokenize;
use crate::poisoncraft::extract_prompt_span;
use crate::stablehash::{fnv1a_64, mix_u64};
use crate::textgen::{EmbeddingVector, GenerationParams, TextBackend, TokenLogProbs};
use crate::{Error, Result};

const DETERMINERS: &[&str] = &["the", "a", "this", "that", "each", "every", "some", "another"];

const ADJECTIVES: &[&str] = &[
    "quiet", "distant", "golden", "narrow", "ancient", "gentle", "hollow", "silver", "crooked",
    "weathered", "pale", "restless", "amber", "forgotten", "steady", "crimson", "velvet",
    "shallow", "wandering", "frozen", "sunlit", "mossy", "brittle", "solemn", "faded", "curious",
    "patient", "rugged", "slender", "misty", "vivid", "tranquil", "jagged", "luminous", "dusty",
    "fragrant", "somber", "radiant", "windswept", "tattered", "nimble", "stubborn", "earnest",
    "gilded", "murky", "placid", "spirited", "timid", "ornate", "rustic", "sleek", "vast",
    "humble", "fierce", "mellow", "stark", "tender", "wary", "zealous", "breezy",
];

const NOUNS: &[&str] = &[
    "harbor", "meadow", "lantern", "orchard", "valley", "ledger", "compass", "garden", "bridge",
    "thicket", "castle", "ribbon", "anchor", "furnace", "satchel", "steeple", "willow", "quarry",
    "parlor", "hearth", "saddle", "gutter", "archway", "terrace", "shutter", "carriage",
    "fountain", "granary", "hillside", "journal", "kettle", "loom", "mantel", "notebook", "oar",
    "pasture", "quilt", "rafter", "signpost", "trellis", "umbrella", "veranda", "wagon", "yarn",
    "attic", "bellows", "cellar", "dovecote", "easel", "fiddle", "gazebo", "hamlet", "inlet",
    "jetty", "knoll", "lighthouse", "mill", "niche", "outpost", "pier", "ravine", "shore",
    "tunnel", "vineyard",
];

const VERBS: &[&str] = &[
    "gleamed", "wandered", "shimmered", "drifted", "settled", "echoed", "lingered", "swayed",
    "rippled", "glistened", "murmured", "trembled", "beckoned", "crumbled", "flickered",
    "hovered", "meandered", "nestled", "quivered", "rustled", "sparkled", "tumbled", "unfolded",
    "vanished", "whispered", "yielded", "bloomed", "climbed", "darkened", "emerged", "faltered",
    "gathered", "hardened", "idled", "journeyed", "kindled", "loomed", "mended", "opened",
    "paused",
];

const PREPOSITIONS: &[&str] = &[
    "under", "near", "beyond", "across", "within", "beside", "against", "toward", "through",
    "around", "behind", "above",
];

const ADVERBS: &[&str] = &[
    "softly", "slowly", "quietly", "gently", "faintly", "steadily", "warmly", "dimly",
    "gradually", "briskly", "calmly", "deeply", "eagerly", "freely", "keenly", "lightly",
    "mildly", "neatly", "openly", "plainly", "rarely", "sharply", "tightly", "vaguely",
];

/// Slot pattern the filler cycles through; long enough that repeated phases
/// rarely produce colliding n-grams.
const PATTERN: &[&[&str]] = &[
    DETERMINERS,
    ADJECTIVES,
    NOUNS,
    VERBS,
    PREPOSITIONS,
    DETERMINERS,
    ADJECTIVES,
    NOUNS,
    ADVERBS,
    VERBS,
    PREPOSITIONS,
    NOUNS,
];

/// Offline backend: pure in `(salt, prompt or text, params.seed)`.
#[derive(Debug, Clone, Default)]
pub struct StubBackend {
    salt: u64,
}

impl StubBackend {
    pub fn new(salt: u64) -> Self {
        StubBackend { salt }
    }

    /// Embedding dimension of the hashed bag-of-words space.
    pub const EMBED_DIM: usize = 256;

    fn rng_for(&self, payload: &str, seed: Option<u64>) -> ChaCha8Rng {
        let key = mix_u64(&[self.salt, fnv1a_64(payload.as_bytes()), seed.unwrap_or(0)]);
        ChaCha8Rng::seed_from_u64(key)
    }
}

fn filler_words(rng: &mut ChaCha8Rng, count: usize, phase: &mut usize) -> Vec<String> {
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let pool = PATTERN[*phase % PATTERN.len()];
        out.push(pool[rng.random_range(0..pool.len())].to_string());
        *phase += 1;
    }
    out
}

impl TextBackend for StubBackend {
    fn id(&self) -> &str {
        "stub"
    }

    fn supports_generation(&self) -> bool {
        true
    }

    fn supports_logprobs(&self) -> bool {
        true
    }

    fn supports_embeddings(&self) -> bool {
        true
    }

    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<String> {
        params.validate()?;
        let mut rng = self.rng_for(prompt, params.seed);
        let mut phase = 0usize;
        let words = match extract_prompt_span(prompt) {
            Some(span) => {
                // Poison template: wrap the requested span in filler so the
                // output always clears the 32-word floor.
                let before = rng.random_range(10..=15);
                let after = rng.random_range(24..=31);
                let mut words = filler_words(&mut rng, before, &mut phase);
                words.extend(word_tokenize(span));
                words.extend(filler_words(&mut rng, after, &mut phase));
                words
            }
            None => filler_words(&mut rng, params.max_new_tokens, &mut phase),
        };
        Ok(words.join(" "))
    }

    /// The stub tokenizer is [`word_tokenize`]; every token gets logprob
    /// `-ln 2`, so downstream perplexity is exactly 2.
    fn score_logprobs(&self, text: &str) -> Result<TokenLogProbs> {
        let tokens = word_tokenize(text);
        if tokens.is_empty() {
            return Err(Error::InvalidInput("cannot score empty text".into()));
        }
        let lp = vec![-std::f64::consts::LN_2; tokens.len()];
        TokenLogProbs::new(tokens, lp)
    }

    /// Hashed bag-of-words embedding with a fixed dimension of 256.
    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        let tokens = word_tokenize(text);
        if tokens.is_empty() {
            return Err(Error::InvalidInput("cannot embed empty text".into()));
        }
        let mut values = vec![0.0f64; Self::EMBED_DIM];
        for token in &tokens {
            let bucket = (fnv1a_64(token.as_bytes()) % Self::EMBED_DIM as u64) as usize;
            values[bucket] += 1.0;
        }
        EmbeddingVector::new(values)
    }
}
