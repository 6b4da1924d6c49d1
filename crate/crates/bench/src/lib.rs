//! Synthetic inputs shared by the criterion benches.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use poisonkit_core::corpus::{Corpus, Role, Sample};

/// `count` samples of `words` random vocabulary words each, with one poison
/// every fifty samples so removal sweeps have both roles.
pub fn synthetic_corpus(count: usize, words: usize, vocab: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<Sample> = (0..count)
        .map(|i| {
            let text = (0..words)
                .map(|_| format!("w{:04}", rng.random_range(0..vocab)))
                .collect::<Vec<_>>()
                .join(" ");
            let role = if i % 50 == 0 { Role::Poison } else { Role::Clean };
            Sample::new(format!("s{i:05}"), text, None, role)
        })
        .collect();
    Corpus::new(samples).expect("ids are unique")
}

pub fn random_word_list(len: usize, vocab: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|_| format!("w{}", rng.random_range(0..vocab)))
        .collect()
}

pub fn random_token_ids(len: usize, seed: u64) -> Vec<u32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.random_range(0..50_000)).collect()
}
