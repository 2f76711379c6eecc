mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;

use ccbench_core::corpus::{parse_jsonl, stratified_split, taxonomy_for, to_jsonl, CommentSentence, LabelSet, Language};
use ccbench_core::cost::{encoder_flops, EncoderSpec};
use ccbench_core::featurize::{hashed_embedding, preprocess, SparseCountVector};
use ccbench_core::heads::naive_bayes::train_naive_bayes;
use ccbench_core::metrics::{confusion, f1};
use ccbench_core::pairgen::{generate_pairs, pairs_from_tsv, pairs_to_tsv, PairPlan};
use ccbench_core::score::{rank, submission_score, LeaderboardEntry, SubmissionInputs};

use common::oracles::{brute_force_scores, reference_tokens};

fn language() -> impl Strategy<Value = Language> {
    prop_oneof![Just(Language::Java), Just(Language::Python), Just(Language::Pharo)]
}

fn sentences(max: usize) -> impl Strategy<Value = Vec<CommentSentence>> {
    prop::collection::vec((language(), any::<u32>(), "[a-z ]{0,12}"), 0..max).prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, (language, bits, text))| {
                let n = taxonomy_for(language).len();
                let mut labels = LabelSet::from_bits(bits & ((1 << n) - 1));
                if labels.is_empty() {
                    labels.insert(bits as usize % n);
                }
                CommentSentence { id: format!("id{i}"), language, text, labels }
            })
            .collect()
    })
}

fn label_sets(len: usize) -> impl Strategy<Value = Vec<LabelSet>> {
    prop::collection::vec(0u32..128, len).prop_map(|v| v.into_iter().map(LabelSet::from_bits).collect())
}

proptest! {
    #[test]
    fn score_is_monotone(f1 in 0.0..0.5f64, rt in 0.0..10.0f64, gf in 0.0..20000.0f64, d in 0.001..0.5f64) {
        let s = |f: f64, r: f64, g: f64| submission_score(&SubmissionInputs::new(f, r, g)).unwrap().total;
        let base = s(f1, rt, gf);
        prop_assert!(s(f1 + d, rt, gf) > base);
        prop_assert!(s(f1, rt + d, gf) < base);
        prop_assert!(s(f1, rt, gf + d * 1000.0) < base);
    }

    #[test]
    fn score_trade_offs_are_linear(f1 in 0.0..0.7f64, rt in 0.0..10.0f64, gf in 0.0..20000.0f64, k in 0.0..4.0f64) {
        let s = |f: f64, r: f64, g: f64| submission_score(&SubmissionInputs::new(f, r, g)).unwrap().total;
        let base = s(f1, rt, gf);
        prop_assert!((s(f1, rt + k, gf) - base + 0.04 * k).abs() < 1e-12);
        prop_assert!((s(f1, rt, gf + 1000.0 * k) - base + 0.04 * k).abs() < 1e-12);
        prop_assert!((s(f1 + k / 15.0, rt, gf) - base - 0.04 * k).abs() < 1e-12);
    }

    #[test]
    fn breakdown_terms_sum_to_total(f1 in 0.0..1.0f64, rt in 0.0..10.0f64, gf in 0.0..20000.0f64) {
        let b = submission_score(&SubmissionInputs::new(f1, rt, gf)).unwrap();
        prop_assert!((b.f1_term + b.runtime_term + b.gflops_term - b.total).abs() < 1e-12);
    }

    #[test]
    fn ranking_orders_totals(rows in prop::collection::vec((0.0..1.0f64, 0.0..5.0f64, 0.0..5000.0f64, any::<bool>()), 0..20)) {
        let entries: Vec<LeaderboardEntry> = rows
            .iter()
            .enumerate()
            .map(|(i, &(f, r, g, ok))| {
                let name = format!("p{i:02}");
                if ok {
                    let inputs = SubmissionInputs::new(f, r, g);
                    LeaderboardEntry::scored(name, inputs, submission_score(&inputs).unwrap())
                } else {
                    LeaderboardEntry::failed(name, "boom")
                }
            })
            .collect();
        let mut reversed = entries.clone();
        reversed.reverse();
        let ranked = rank(entries);
        prop_assert_eq!(&ranked, &rank(reversed));
        let totals: Vec<Option<f64>> = ranked.iter().map(|e| e.breakdown.map(|b| b.total)).collect();
        for w in totals.windows(2) {
            match (w[0], w[1]) {
                (Some(a), Some(b)) => prop_assert!(a >= b),
                (None, Some(_)) => prop_assert!(false, "failed entry ranked above a scored one"),
                _ => {}
            }
        }
    }

    #[test]
    fn label_set_round_trips(indices in prop::collection::btree_set(0usize..32, 0..10)) {
        let set = LabelSet::from_indices(indices.iter().copied()).unwrap();
        prop_assert_eq!(set.iter().collect::<BTreeSet<_>>(), indices.clone());
        prop_assert_eq!(set.len(), indices.len());
        prop_assert_eq!(LabelSet::from_bits(set.bits()), set);
    }

    #[test]
    fn jsonl_round_trips(corpus in sentences(20)) {
        prop_assert_eq!(parse_jsonl(&to_jsonl(&corpus)).unwrap(), corpus);
    }

    #[test]
    fn split_partitions_each_language(corpus in sentences(60), ratio in 0.2..0.9f64, seed in any::<u64>()) {
        let viable = Language::ALL
            .iter()
            .all(|&l| corpus.iter().filter(|s| s.language == l).count() != 1);
        prop_assume!(viable);
        let split = stratified_split(&corpus, ratio, seed).unwrap();
        prop_assert_eq!(&split, &stratified_split(&corpus, ratio, seed).unwrap());
        let mut ids: Vec<&str> = split.train.iter().chain(&split.test).map(|s| s.id.as_str()).collect();
        ids.sort_unstable();
        let mut original: Vec<&str> = corpus.iter().map(|s| s.id.as_str()).collect();
        original.sort_unstable();
        prop_assert_eq!(ids, original);
    }

    #[test]
    fn split_preserves_label_rates(
        rows in prop::collection::vec((0usize..5, 0usize..5, prop::bool::weighted(0.1)), 100..400),
        seed in any::<u64>(),
    ) {
        let corpus: Vec<CommentSentence> = rows
            .iter()
            .enumerate()
            .map(|(i, &(a, b, two))| CommentSentence {
                id: format!("s{i}"),
                language: Language::Java,
                text: String::new(),
                labels: LabelSet::from_indices(if two { vec![a, b] } else { vec![a] }).unwrap(),
            })
            .collect();
        let split = stratified_split(&corpus, 0.8, seed).unwrap();
        for label in 0..5 {
            let positives = |v: &[CommentSentence]| v.iter().filter(|s| s.labels.contains(label)).count() as f64;
            if positives(&corpus) >= 10.0 {
                let full = positives(&corpus) / corpus.len() as f64;
                let train = positives(&split.train) / split.train.len() as f64;
                prop_assert!((full - train).abs() <= 0.05, "label {label}: {train} vs {full}");
            }
        }
    }

    #[test]
    fn tokenizer_matches_reference(text in "([A-Za-z0-9 _.,;:()*/#'-]|/\\*\\*|\\*/|//){0,40}") {
        prop_assert_eq!(preprocess(&text).0, reference_tokens(&text));
    }

    #[test]
    fn hashed_embedding_is_unit_or_zero(words in prop::collection::vec("[a-z]{1,6}", 0..12), dim in 1usize..64, seed in any::<u64>()) {
        let tokens = preprocess(&words.join(" "));
        let v = hashed_embedding(&tokens, dim, seed);
        prop_assert_eq!(v.dim(), dim);
        prop_assert_eq!(&v, &hashed_embedding(&tokens, dim, seed));
        if v.0.iter().all(|&x| x == 0.0) {
            prop_assert!(tokens.is_empty() || v.norm() == 0.0);
        } else {
            prop_assert!((v.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn metrics_match_brute_force((truth, predicted) in (0usize..40).prop_flat_map(|n| (label_sets(n), label_sets(n))), label in 0usize..7) {
        let counts = confusion(&truth, &predicted, label).unwrap();
        prop_assert_eq!(counts.total(), truth.len());
        let got = f1(label, &counts);
        let want = brute_force_scores(&truth, &predicted, label);
        prop_assert!((got.precision - want.precision).abs() <= 1e-12);
        prop_assert!((got.recall - want.recall).abs() <= 1e-12);
        prop_assert!((got.f1 - want.f1).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&got.f1));
    }

    #[test]
    fn naive_bayes_posterior_is_a_distribution(
        docs in prop::collection::vec(prop::collection::vec(0u32..4, 5), 2..10),
        query in prop::collection::vec(0u32..6, 5),
        alpha in 0.05..3.0f64,
    ) {
        let sparse = |row: &[u32]| SparseCountVector {
            entries: row.iter().enumerate().filter(|(_, &c)| c > 0).map(|(i, &c)| (i, c)).collect(),
            dim: row.len(),
        };
        let x: Vec<SparseCountVector> = docs.iter().map(|d| sparse(d)).collect();
        let y: Vec<usize> = (0..docs.len()).map(|i| i % 3).collect();
        let model = train_naive_bayes(&x, &y, alpha).unwrap();
        let p = model.posterior(&sparse(&query)).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn pairs_survive_tsv(seed in any::<u64>(), iterations in 1usize..5) {
        let corpus: Vec<CommentSentence> = (0..12)
            .map(|i| CommentSentence {
                id: format!("s{i}"),
                language: Language::Python,
                text: String::new(),
                labels: LabelSet::single(i % 3),
            })
            .collect();
        let pairs = generate_pairs(&corpus, PairPlan { num_iterations: iterations, seed }).unwrap();
        prop_assert_eq!(&pairs, &generate_pairs(&corpus, PairPlan { num_iterations: iterations, seed }).unwrap());
        prop_assert_eq!(pairs_from_tsv(&pairs_to_tsv(&pairs)).unwrap(), pairs);
    }

    #[test]
    fn encoder_flops_scale_with_batch(
        layers in 1u64..24, heads in 1u64..16, head_dim in 1u64..64, ffn_mult in 1u64..5,
        out_dim in 1u64..1024, n in 1u64..512, batch in 1u64..64,
    ) {
        let d = heads * head_dim;
        let spec = EncoderSpec {
            name: "probe".into(),
            layers,
            hidden_dim: d,
            ffn_dim: ffn_mult * d,
            heads,
            max_seq: 512,
            out_dim,
        };
        let one = encoder_flops(&spec, n, 1).unwrap().0;
        prop_assert_eq!(encoder_flops(&spec, n, batch).unwrap().0, batch * one);
        if n < 512 {
            prop_assert!(encoder_flops(&spec, n + 1, 1).unwrap().0 > one);
        }
    }
}
