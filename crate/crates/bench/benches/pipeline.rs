use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use linkexplain::diffusion::{self, compute_ppr};
use linkexplain::encoder::{init_params, EncoderInput};
use linkexplain::synthetic::{generate, split_synthetic, SynthParams, SyntheticDataset};
use linkexplain::{train, FeatureNorm, Model, Pair, TrainConfig};

fn dataset() -> SyntheticDataset {
    generate(&SynthParams::preset("syn-sparse", 0).unwrap()).unwrap()
}

fn config() -> TrainConfig {
    TrainConfig {
        alpha: 0.7,
        feature_norm: FeatureNorm::RowL2,
        ..Default::default()
    }
}

fn bench_diffusion(c: &mut Criterion) {
    let ds = dataset();
    c.bench_function("ppr/syn-sparse", |b| {
        b.iter(|| {
            compute_ppr(
                black_box(&ds.graph),
                diffusion::DEFAULT_GAMMA,
                diffusion::DEFAULT_K_MAX,
                diffusion::DEFAULT_DROP_TOL,
            )
            .unwrap()
        })
    });
}

fn bench_encoder(c: &mut Criterion) {
    let ds = dataset();
    let input = EncoderInput::prepare(&ds.graph, FeatureNorm::RowL2);
    let params = init_params(input.feature_dim(), 256, 0).unwrap();
    c.bench_function("encoder/forward", |b| {
        b.iter(|| input.forward(black_box(&params)).unwrap())
    });
}

fn bench_scoring(c: &mut Criterion) {
    let ds = dataset();
    let split = split_synthetic(&ds, 0).unwrap();
    let cfg = TrainConfig {
        max_epochs: 1,
        ..config()
    };
    let outcome = train(&ds.graph, &split, &cfg).unwrap();
    let model = Model::from_split(outcome.state, &ds.graph, &split).unwrap();
    let scorer = model.scorer();
    let pairs: Vec<Pair> = split
        .test_pos
        .iter()
        .chain(&split.test_neg)
        .copied()
        .take(1000)
        .collect();
    c.bench_function("pair/probability_1000", |b| {
        b.iter(|| pairs.iter().map(|&(i, j)| scorer.probability(i, j)).sum::<f64>())
    });
    c.bench_function("pair/explain_1000", |b| {
        b.iter(|| {
            pairs
                .iter()
                .map(|&(i, j)| scorer.explain(i, j).unwrap())
                .collect::<Vec<_>>()
        })
    });
}

fn bench_training(c: &mut Criterion) {
    let ds = dataset();
    let split = split_synthetic(&ds, 0).unwrap();
    let cfg = TrainConfig {
        max_epochs: 1,
        ..config()
    };
    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    group.bench_function("one_epoch/syn-sparse", |b| {
        b.iter(|| train(&ds.graph, &split, &cfg).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_diffusion, bench_encoder, bench_scoring, bench_training);
criterion_main!(benches);
