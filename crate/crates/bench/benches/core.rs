use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ccbench_core::cost::{encoder_flops, EncoderSpec};
use ccbench_core::featurize::{hashed_embedding, preprocess};
use ccbench_core::heads::logistic::{train_logistic, LogisticConfig};
use ccbench_core::heads::tree::{train_forest, ForestConfig};
use ccbench_core::metrics::{confusion, f1};
use ccbench_core::score::{submission_score, SubmissionInputs};
use ccbench_core::LabelSet;

fn problem(n: usize, dim: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let y = x.iter().map(|row| row[0] + 0.5 * row[1] + rng.random_range(-0.3..0.3) > 0.0).collect();
    (x, y)
}

fn cost_and_score(c: &mut Criterion) {
    let spec = EncoderSpec::preset("all-mpnet-base-v2").expect("built-in preset");
    c.bench_function("encoder_flops", |b| b.iter(|| encoder_flops(black_box(&spec), black_box(128), 32)));
    let inputs = SubmissionInputs::new(0.6394, 0.9422, 999.0271);
    c.bench_function("submission_score", |b| b.iter(|| submission_score(black_box(&inputs))));
}

fn featurize(c: &mut Criterion) {
    let text = "/** Returns the cached value, or computes it with the given loader when absent. */";
    c.bench_function("preprocess", |b| b.iter(|| preprocess(black_box(text))));
    let tokens = preprocess(text);
    c.bench_function("hashed_embedding_384", |b| b.iter(|| hashed_embedding(black_box(&tokens), 384, 7)));
}

fn heads(c: &mut Criterion) {
    let mut group = c.benchmark_group("train_logistic");
    for n in [100, 400] {
        let (x, y) = problem(n, 32, 1);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| train_logistic(&x, &y, &LogisticConfig::default()))
        });
    }
    group.finish();

    let (x, y) = problem(400, 32, 2);
    let forest = train_forest(&x, &y, &ForestConfig { n_trees: 50, ..ForestConfig::default() }).expect("valid problem");
    c.bench_function("forest_predict_50_trees", |b| b.iter(|| forest.predict_proba(black_box(&x[0]))));
}

fn metrics(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut sets = |n: usize| -> Vec<LabelSet> { (0..n).map(|_| LabelSet::from_bits(rng.random_range(0..128))).collect() };
    let truth = sets(2000);
    let predicted = sets(2000);
    c.bench_function("f1_2000_sentences", |b| {
        b.iter(|| (0..7).map(|l| f1(l, &confusion(&truth, &predicted, l).expect("equal lengths")).f1).sum::<f64>())
    });
}

criterion_group!(benches, cost_and_score, featurize, heads, metrics);
criterion_main!(benches);
