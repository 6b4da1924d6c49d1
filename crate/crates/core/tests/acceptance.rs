//! Acceptance suite: one test per release criterion, each printing a
//! PASS line (run with `--nocapture` to see them).
//!
//! Oracles here are deliberately independent of the library's
//! implementations: full-table dynamic programs, exhaustive sweeps, and
//! direct counting.

use std::collections::HashSet;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use poisonkit_core::corpus::{
    word_tokenize, Corpus, InjectionAmount, Role, Sample, TargetSpec,
};
use poisonkit_core::defense::{
    build_index, goldfish_mask, perplexity_filter_curve, sweep_thresholds, trap_filter_curve,
    trap_score, SampleScore,
};
use poisonkit_core::harness::evaluate_memorization;
use poisonkit_core::membership::{calibrate, min_k_prob, perplexity};
use poisonkit_core::poisoncraft::{contains_verbatim, craft, CraftOptions};
use poisonkit_core::simmetrics::{edit_similarity, lcs_length, rouge_l};
use poisonkit_core::textgen::{GenerationParams, StubBackend, TextBackend, TokenLogProbs};

fn vocab_text(rng: &mut ChaCha8Rng, words: usize, vocab: usize) -> String {
    (0..words)
        .map(|_| format!("w{:04}", rng.random_range(0..vocab)))
        .collect::<Vec<_>>()
        .join(" ")
}

fn numbered_target(n: usize) -> TargetSpec {
    let text = (0..n).map(|i| format!("t{i}")).collect::<Vec<_>>().join(" ");
    TargetSpec::new(text, "bookT", 0.25).unwrap()
}

#[test]
fn a01_algorithm_schedule_conformance() {
    let started = Instant::now();
    let target = numbered_target(32);
    let backend = StubBackend::default();
    let records = craft(
        &target,
        5,
        56,
        &backend,
        &GenerationParams::default().with_seed(42),
        &CraftOptions::default(),
    )
    .unwrap();

    assert_eq!(records.len(), 56);
    let mut window_counts = vec![0usize; 29];
    for (i, record) in records.iter().enumerate() {
        // Cyclic walk: poison i+1 uses window (i mod 28) + 1.
        assert_eq!(record.cgram.window_index(), (i % 28) + 1);
        window_counts[record.cgram.window_index()] += 1;
        assert!(contains_verbatim(record.sample.text(), &record.cgram));
    }
    assert!(window_counts[1..=28].iter().all(|&c| c == 2));

    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 5.0, "took {elapsed:.2}s, budget 5s");
    println!("ACCEPTANCE PASS: crafting schedule (56 poisons, windows 1-28 twice, verbatim) in {elapsed:.2}s");
}

/// Full-table LCS, the oracle route.
fn oracle_lcs<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut dp = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            dp[i][j] = if a[i - 1] == b[j - 1] {
                dp[i - 1][j - 1] + 1
            } else {
                dp[i - 1][j].max(dp[i][j - 1])
            };
        }
    }
    dp[a.len()][b.len()]
}

fn oracle_rouge(candidate: &[String], reference: &[String]) -> f64 {
    let lcs = oracle_lcs(candidate, reference) as f64;
    if lcs == 0.0 {
        return 0.0;
    }
    let p = lcs / candidate.len() as f64;
    let r = lcs / reference.len() as f64;
    2.0 * p * r / (p + r)
}

fn oracle_levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut dp = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in dp.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in dp[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = dp[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            dp[i][j] = sub.min(dp[i - 1][j] + 1).min(dp[i][j - 1] + 1);
        }
    }
    dp[a.len()][b.len()]
}

fn random_words(rng: &mut ChaCha8Rng, max_len: usize) -> Vec<String> {
    let len = rng.random_range(0..=max_len);
    (0..len)
        .map(|_| {
            let c = (b'a' + rng.random_range(0..4u8)) as char;
            let r = rng.random_range(0..3u8);
            format!("{c}{r}")
        })
        .collect()
}

fn random_string(rng: &mut ChaCha8Rng, max_len: usize) -> String {
    let len = rng.random_range(0..=max_len);
    (0..len)
        .map(|_| (b'a' + rng.random_range(0..3u8)) as char)
        .collect()
}

#[test]
fn a02_metric_oracles_agree() {
    let started = Instant::now();
    const TRIALS: usize = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE);

    // lcs_length and rouge_l against the full-table DP.
    for _ in 0..TRIALS {
        let a = random_words(&mut rng, 12);
        let b = random_words(&mut rng, 12);
        assert_eq!(lcs_length(&a, &b), oracle_lcs(&a, &b));
        if !b.is_empty() {
            let got = rouge_l(&a, &b).unwrap();
            assert!((got - oracle_rouge(&a, &b)).abs() <= 1e-12);
        }
    }

    // edit_similarity against the quadratic-space DP.
    for _ in 0..TRIALS {
        let a = random_string(&mut rng, 16);
        let b = random_string(&mut rng, 16);
        let max_len = a.chars().count().max(b.chars().count());
        let expected = if max_len == 0 {
            1.0
        } else {
            1.0 - oracle_levenshtein(&a, &b) as f64 / max_len as f64
        };
        assert!((edit_similarity(&a, &b) - expected).abs() <= 1e-12);
    }

    // trap_score against direct pairwise counting plus exhaustive x search,
    // with no inverted index involved.
    for trial in 0..TRIALS {
        let n_samples = rng.random_range(2..7);
        let words_per = rng.random_range(2..7);
        let samples: Vec<Sample> = (0..n_samples)
            .map(|i| {
                let text = (0..words_per)
                    .map(|_| format!("v{}", rng.random_range(0..6)))
                    .collect::<Vec<_>>()
                    .join(" ");
                Sample::new(format!("s{trial}-{i}"), text, None, Role::Clean)
            })
            .collect();
        let subject = samples[0].clone();
        let corpus = Corpus::new(samples.clone()).unwrap();
        let index = build_index(&corpus, 2).unwrap();

        let bigrams = |s: &Sample| -> HashSet<String> {
            s.words()
                .windows(2)
                .map(|w| format!("{} {}", w[0].to_lowercase(), w[1].to_lowercase()))
                .collect()
        };
        let subject_grams = bigrams(&subject);
        let counts: Vec<usize> = subject_grams
            .iter()
            .map(|g| {
                samples[1..]
                    .iter()
                    .filter(|other| bigrams(other).contains(g))
                    .count()
            })
            .collect();
        let mut expected = 0;
        for x in 0..=counts.len() {
            if counts.iter().filter(|&&c| c >= x).count() >= x {
                expected = expected.max(x);
            }
        }
        assert_eq!(trap_score(&subject, &index).unwrap(), expected);
    }

    // min_k_prob against repeated minimum extraction.
    for _ in 0..TRIALS {
        let len = rng.random_range(1..20);
        let logprobs: Vec<f64> = (0..len).map(|_| -rng.random_range(0.0..8.0f64)).collect();
        let tokens = (0..len).map(|i| format!("t{i}")).collect();
        let lp = TokenLogProbs::new(tokens, logprobs.clone()).unwrap();
        let k = rng.random_range(0.01..=100.0f64);
        let take = ((k / 100.0 * len as f64).ceil() as usize).clamp(1, len);
        let mut pool = logprobs;
        let mut sum = 0.0;
        for _ in 0..take {
            let (idx, _) = pool
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap();
            sum += pool.remove(idx);
        }
        let expected = -(sum / take as f64);
        assert!((min_k_prob(&lp, k).unwrap() - expected).abs() <= 1e-12);
    }

    // calibrate against a sweep of every candidate threshold.
    for _ in 0..TRIALS {
        let len = rng.random_range(1..50);
        let members: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..10.0f64)).collect();
        let target = rng.random_range(0.0..10.0f64);
        let result = calibrate(&members, target).unwrap();

        let mut candidates: Vec<f64> = members.clone();
        candidates.push(target);
        candidates.push(f64::NEG_INFINITY);
        let mut best_recall = 0.0f64;
        for &threshold in &candidates {
            if target < threshold {
                continue; // target must stay a non-member
            }
            let recall =
                members.iter().filter(|&&s| s < threshold).count() as f64 / members.len() as f64;
            best_recall = best_recall.max(recall);
        }
        assert!((result.recall - best_recall).abs() <= 1e-12);
        assert!(result.target_score >= result.threshold);
    }

    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "took {elapsed:.2}s, budget 60s");
    println!(
        "ACCEPTANCE PASS: 6 metric implementations match independent oracles on {TRIALS} instances each in {elapsed:.2}s"
    );
}

#[test]
fn a03_worked_values() {
    let rouge = rouge_l(
        &word_tokenize("the cat on the mat"),
        &word_tokenize("the cat sat on the mat"),
    )
    .unwrap();
    assert!((rouge - 10.0 / 11.0).abs() <= 1e-12);

    let edit = edit_similarity("kitten", "sitting");
    assert!((edit - 4.0 / 7.0).abs() <= 1e-12);

    // Other-counts {0, 1, 2, 5, 9} realized as a real corpus.
    let words = ["a", "b", "c", "d", "e", "f", "g"];
    let mut samples = vec![Sample::new("s", words.join(" "), None, Role::Clean)];
    for (t, count) in [0usize, 1, 2, 5, 9].into_iter().enumerate() {
        let trigram = words[t..t + 3].join(" ");
        for j in 0..count {
            samples.push(Sample::new(
                format!("o{t}-{j}"),
                format!("u{t}x{j} v{t}x{j} {trigram}"),
                None,
                Role::Clean,
            ));
        }
    }
    let corpus = Corpus::new(samples).unwrap();
    let index = build_index(&corpus, 3).unwrap();
    assert_eq!(trap_score(&corpus.samples()[0], &index).unwrap(), 2);

    let lp = TokenLogProbs::new(
        vec!["a".into(), "b".into(), "c".into(), "d".into()],
        vec![-0.5, -1.0, -2.0, -4.0],
    )
    .unwrap();
    assert_eq!(min_k_prob(&lp, 50.0).unwrap(), 3.0);

    println!("ACCEPTANCE PASS: worked values (rouge 10/11, edit 4/7, trap 2, min-k 3.0)");
}

#[test]
fn a04_calibration_semantics() {
    let result = calibrate(&[1.0, 2.0, 3.0, 8.0], 5.0).unwrap();
    assert_eq!(result.threshold, 5.0);
    assert_eq!(result.recall, 0.75);

    // Poisoned-model collapse: target drops below every member score.
    let collapsed = calibrate(&[1.0, 2.0, 3.0, 8.0], 0.5).unwrap();
    assert_eq!(collapsed.recall, 0.0);

    // Clean upper bound: target above every member score.
    let clean = calibrate(&[1.0, 2.0, 3.0, 8.0], 9.0).unwrap();
    assert_eq!(clean.recall, 1.0);

    println!("ACCEPTANCE PASS: calibration picks threshold 5 / recall 75% and collapses to 0% below members");
}

/// Synthetic corpus for the trap-filter criteria: 1000 clean samples of 32
/// seeded-random vocabulary words plus `k` stub-crafted poisons.
fn trap_test_corpus(c: usize, k: usize) -> (Corpus, TargetSpec) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7AB5);
    let clean: Vec<Sample> = (0..1000)
        .map(|i| {
            Sample::new(
                format!("clean-{i:04}"),
                vocab_text(&mut rng, 32, 5000),
                None,
                Role::Clean,
            )
        })
        .collect();
    let target = TargetSpec::new(vocab_text(&mut rng, 32, 5000), "bookT", 0.25).unwrap();
    let backend = StubBackend::default();
    let poisons = craft(
        &target,
        c,
        k,
        &backend,
        &GenerationParams::default().with_seed(0x7AB5),
        &CraftOptions::default(),
    )
    .unwrap();
    let base = Corpus::new(clean).unwrap();
    let poison_samples: Vec<Sample> = poisons.into_iter().map(|p| p.sample).collect();
    let corpus = base
        .inject(&poison_samples, InjectionAmount::Count(k), 0x7AB5)
        .unwrap();
    (corpus, target)
}

#[test]
fn a05_trap_filter_separation() {
    let started = Instant::now();

    let strong = trap_test_corpus(7, 20).0;
    let strong_curve = {
        let scores = poisonkit_core::defense::trap_scores(&strong, 3).unwrap();
        let thresholds = sweep_thresholds(scores.iter().map(|s| s.value));
        trap_filter_curve(&strong, 3, &thresholds).unwrap()
    };
    let strong_best = strong_curve
        .points
        .iter()
        .filter(|p| p.clean_removed_pct <= 20.0)
        .map(|p| p.poison_removed_pct)
        .fold(0.0f64, f64::max);
    assert!(
        strong_curve
            .points
            .iter()
            .any(|p| p.poison_removed_pct >= 85.0 && p.clean_removed_pct <= 20.0),
        "no threshold removes >=85% poisons at <=20% clean cost: {strong_curve:?}"
    );

    // Weak-attack degradation: at c = 3 the best threshold with the same
    // clean budget removes strictly fewer poisons.
    let weak = trap_test_corpus(3, 20).0;
    let weak_curve = {
        let scores = poisonkit_core::defense::trap_scores(&weak, 3).unwrap();
        let thresholds = sweep_thresholds(scores.iter().map(|s| s.value));
        trap_filter_curve(&weak, 3, &thresholds).unwrap()
    };
    let weak_best = weak_curve
        .points
        .iter()
        .filter(|p| p.clean_removed_pct <= 20.0)
        .map(|p| p.poison_removed_pct)
        .fold(0.0f64, f64::max);
    assert!(
        weak_best < strong_best,
        "weak attack not easier to miss: weak {weak_best}% vs strong {strong_best}%"
    );

    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 30.0, "took {elapsed:.2}s, budget 30s");
    println!(
        "ACCEPTANCE PASS: trap filter removes {strong_best:.0}% of c=7 poisons (<=20% clean) vs {weak_best:.0}% at c=3 in {elapsed:.2}s"
    );
}

#[test]
fn a06_goldfish_mask_consistency_and_rate() {
    let (h, k, salt) = (13usize, 4u64, 7u64);
    let passage: Vec<u32> = (0..100).map(|i| 50_000 + i).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0x601D);

    let mut doc_a: Vec<u32> = (0..700).map(|_| rng.random_range(0..40_000)).collect();
    let start_a = doc_a.len();
    doc_a.extend(&passage);
    doc_a.extend((0..200).map(|_| rng.random_range(0..40_000)));

    let mut doc_b: Vec<u32> = (0..150).map(|_| rng.random_range(0..40_000)).collect();
    let start_b = doc_b.len();
    doc_b.extend(&passage);
    doc_b.extend((0..750).map(|_| rng.random_range(0..40_000)));

    assert_eq!(doc_a.len(), 1000);
    assert_eq!(doc_b.len(), 1000);

    let mask_a = goldfish_mask(&doc_a, h, k, salt).unwrap();
    let mask_b = goldfish_mask(&doc_b, h, k, salt).unwrap();
    for offset in h..passage.len() {
        assert_eq!(
            mask_a[start_a + offset],
            mask_b[start_b + offset],
            "interior drop decisions diverge at offset {offset}"
        );
    }

    let tokens: Vec<u32> = (0..100_000).map(|_| rng.random_range(0..u32::MAX)).collect();
    let mask = goldfish_mask(&tokens, h, k, salt).unwrap();
    let droppable = mask.len() - h;
    let rate = mask.iter().filter(|&&m| m).count() as f64 / droppable as f64;
    assert!(
        (rate - 0.25).abs() < 0.01,
        "drop rate {rate} not within 0.25 +/- 0.01"
    );

    println!(
        "ACCEPTANCE PASS: goldfish mask repeats decisions across documents; drop rate {rate:.4} ~ 1/{k}"
    );
}

#[test]
fn a07_perplexity_filter_indistinguishability() {
    let backend = StubBackend::default();
    let params = GenerationParams::default();

    // Clean texts and poisons both come out of the stub generator, at the
    // corpus sample length of 32 words.
    let mut clean_params = params.clone();
    clean_params.max_new_tokens = 32;
    let mut texts: Vec<(String, Role)> = Vec::new();
    for i in 0..200 {
        let text = backend
            .generate(
                &format!("clean seed material {i}"),
                &clean_params.with_seed(i),
            )
            .unwrap();
        texts.push((text, Role::Clean));
    }
    let target = numbered_target(32);
    let poisons = craft(
        &target,
        5,
        50,
        &backend,
        &params.with_seed(0xF17),
        &CraftOptions::default(),
    )
    .unwrap();
    for p in &poisons {
        texts.push((p.sample.text().to_string(), Role::Poison));
    }

    let scores: Vec<SampleScore> = texts
        .iter()
        .enumerate()
        .map(|(i, (text, role))| SampleScore {
            id: format!("x{i}"),
            value: perplexity(&backend.score_logprobs(text).unwrap()).unwrap(),
            role: *role,
        })
        .collect();
    let thresholds = sweep_thresholds(scores.iter().map(|s| s.value));
    let curve = perplexity_filter_curve(&scores, &thresholds).unwrap();

    for pair in curve.points.windows(2) {
        assert!(pair[1].clean_removed_pct <= pair[0].clean_removed_pct);
        assert!(pair[1].poison_removed_pct <= pair[0].poison_removed_pct);
    }
    let worst_gap = curve
        .points
        .iter()
        .map(|p| (p.clean_removed_pct - p.poison_removed_pct).abs())
        .fold(0.0f64, f64::max);
    assert!(
        worst_gap < 15.0,
        "clean/poison removal diverges by {worst_gap} points"
    );

    println!(
        "ACCEPTANCE PASS: perplexity curve monotone; max clean/poison gap {worst_gap:.1} < 15 points"
    );
}

/// The full offline pipeline, written to disk the same way the CLI writes it.
fn pipeline_files(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let backend = StubBackend::default();
    let params = GenerationParams::default();
    let target = numbered_target(32);

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let clean: Vec<Sample> = (0..300)
        .map(|i| {
            Sample::new(
                format!("clean-{i:04}"),
                vocab_text(&mut rng, 32, 2000),
                Some(format!("book{}", i % 7)),
                Role::Clean,
            )
        })
        .collect();
    let corpus = Corpus::new(clean).unwrap();

    let records = craft(
        &target,
        5,
        12,
        &backend,
        &params.with_seed(5),
        &CraftOptions::default(),
    )
    .unwrap();
    let poisons: Vec<Sample> = records.iter().map(|r| r.sample.clone()).collect();
    let poison_corpus = Corpus::new(poisons.clone()).unwrap();
    poison_corpus.save_jsonl(dir.join("poisons.jsonl")).unwrap();

    let poisoned = corpus
        .exclude_book(target.book_id())
        .inject(&poisons, InjectionAmount::Rate(0.02), 5)
        .unwrap();
    poisoned.save_jsonl(dir.join("corpus.jsonl")).unwrap();
    std::fs::write(
        dir.join("inject_manifest.json"),
        serde_json::to_vec_pretty(poisoned.manifest().unwrap()).unwrap(),
    )
    .unwrap();

    let report =
        evaluate_memorization(&backend, &target, 100, &params, &[0, 1, 2], "determinism").unwrap();
    std::fs::write(
        dir.join("report.json"),
        serde_json::to_vec_pretty(&report).unwrap(),
    )
    .unwrap();

    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|entry| {
            let entry = entry.unwrap();
            (
                entry.file_name().to_string_lossy().into_owned(),
                std::fs::read(entry.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn a08_pipeline_determinism() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let files_a = pipeline_files(dir_a.path());
    let files_b = pipeline_files(dir_b.path());
    assert_eq!(files_a.len(), 4);
    for ((name_a, bytes_a), (name_b, bytes_b)) in files_a.iter().zip(files_b.iter()) {
        assert_eq!(name_a, name_b);
        assert_eq!(bytes_a, bytes_b, "{name_a} differs between runs");
    }
    println!(
        "ACCEPTANCE PASS: craft->inject->eval twice produced byte-identical files ({})",
        files_a
            .iter()
            .map(|(n, _)| n.as_str())
            .collect::<Vec<_>>()
            .join(", ")
    );
}

#[test]
fn a09_end_to_end_oracle_backend() {
    struct EchoSuffix(String);

    impl TextBackend for EchoSuffix {
        fn id(&self) -> &str {
            "echo-suffix"
        }

        fn supports_generation(&self) -> bool {
            true
        }

        fn generate(&self, _prompt: &str, _params: &GenerationParams) -> poisonkit_core::Result<String> {
            Ok(self.0.clone())
        }
    }

    let target = numbered_target(32);
    let (_, suffix) = poisonkit_core::harness::build_prefix(&target).unwrap();
    let backend = EchoSuffix(suffix);
    let report = evaluate_memorization(
        &backend,
        &target,
        10,
        &GenerationParams::default(),
        &[0, 1, 2],
        "oracle",
    )
    .unwrap();
    assert_eq!(report.max.rouge_l, 1.0);
    assert_eq!(report.max.edit_sim, 1.0);
    println!("ACCEPTANCE PASS: verbatim-suffix backend scores max rouge = max edit = 1.0");
}
