//! Benchmarks for the hot kernels: similarity scoring (the per-generation
//! cost of an evaluation run), trap-index construction and scoring, goldfish
//! masking, and end-to-end poison crafting against the stub backend.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use poisonkit_bench::{random_token_ids, random_word_list, synthetic_corpus};
use poisonkit_core::corpus::TargetSpec;
use poisonkit_core::defense::{goldfish_mask, trap_scores};
use poisonkit_core::poisoncraft::{craft, CraftOptions};
use poisonkit_core::simmetrics::{edit_similarity, lcs_length, rouge_l};
use poisonkit_core::textgen::{GenerationParams, StubBackend};

fn bench_similarity(c: &mut Criterion) {
    // A 72-word completion scored against a 24-word suffix: the shape of one
    // evaluation-generation scoring step.
    let candidate = random_word_list(72, 400, 1);
    let reference = random_word_list(24, 400, 2);
    c.bench_function("rouge_l/72x24_words", |b| {
        b.iter(|| rouge_l(black_box(&candidate), black_box(&reference)).unwrap())
    });
    c.bench_function("lcs_length/72x24_words", |b| {
        b.iter(|| lcs_length(black_box(&candidate), black_box(&reference)))
    });

    let a = candidate.join(" ");
    let b_text = reference.join(" ");
    c.bench_function("edit_similarity/430x140_chars", |b| {
        b.iter(|| edit_similarity(black_box(&a), black_box(&b_text)))
    });
}

fn bench_trap(c: &mut Criterion) {
    let corpus = synthetic_corpus(1000, 32, 5000, 3);
    c.bench_function("trap_scores/1000x32_trigrams", |b| {
        b.iter(|| trap_scores(black_box(&corpus), 3).unwrap())
    });
}

fn bench_goldfish(c: &mut Criterion) {
    let tokens = random_token_ids(100_000, 4);
    c.bench_function("goldfish_mask/100k_tokens_h13", |b| {
        b.iter(|| goldfish_mask(black_box(&tokens), 13, 4, 0).unwrap())
    });
}

fn bench_craft(c: &mut Criterion) {
    let target = TargetSpec::new(random_word_list(32, 5000, 5).join(" "), "bk", 0.25).unwrap();
    let backend = StubBackend::default();
    let params = GenerationParams::default().with_seed(0);
    let options = CraftOptions::default();
    c.bench_function("craft/stub_c5_k20", |b| {
        b.iter(|| craft(black_box(&target), 5, 20, &backend, &params, &options).unwrap())
    });
}

criterion_group!(benches, bench_similarity, bench_trap, bench_goldfish, bench_craft);
criterion_main!(benches);
