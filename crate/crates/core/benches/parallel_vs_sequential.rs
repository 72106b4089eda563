use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hieroscribe_core::classic::{extract_features_batch, FeatureConfig};
use hieroscribe_core::evaluation::{tsne, TsneConfig};
use hieroscribe_core::metric::{EncoderConfig, EncoderModel};
use hieroscribe_core::synth::synthetic_dataset;
use hieroscribe_core::Execution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

const MODES: [(&str, Execution); 2] = [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)];

fn features(c: &mut Criterion) {
    let samples = synthetic_dataset(8, 8, 100, 1).unwrap();
    let images: Vec<_> = samples.iter().map(|s| &s.image).collect();
    let cfg = FeatureConfig::default();
    let mut group = c.benchmark_group("hog_projection_features");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| extract_features_batch(black_box(&images), &cfg, exec).unwrap())
        });
    }
    group.finish();
}

fn embedding(c: &mut Criterion) {
    let samples = synthetic_dataset(4, 8, 100, 2).unwrap();
    let images: Vec<_> = samples.iter().map(|s| &s.image).collect();
    let encoder = EncoderModel::new(EncoderConfig::desk(), 3).unwrap();
    let mut group = c.benchmark_group("embed_batch");
    group.sample_size(20);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| encoder.embed_batch(black_box(&images), exec).unwrap())
        });
    }
    group.finish();
}

fn tsne_map(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let data: Vec<Vec<f64>> = (0..120)
        .map(|i| {
            let offset = (i % 4) as f64 * 5.0;
            (0..16).map(|_| offset + rng.random::<f64>()).collect()
        })
        .collect();
    let mut group = c.benchmark_group("tsne");
    group.sample_size(10);
    for (name, exec) in MODES {
        let cfg = TsneConfig {
            perplexity: 10.0,
            iterations: 200,
            exaggeration_iterations: 50,
            exec,
            ..TsneConfig::default()
        };
        group.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| tsne(black_box(&data), &cfg).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, features, embedding, tsne_map);
criterion_main!(benches);
