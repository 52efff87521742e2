//! Benchmarks for the hot numeric paths: forward passes, the orthogonal
//! iteration, SVD, and rank estimation.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use convfactor::factorize::{evbmf_rank, hooi_tucker2};
use convfactor::layers::{conv2d_forward, depthsep_forward, FeatureMap, LayerSpec, LayerWeights};
use convfactor::svd::svd;
use convfactor::tensor::{unfold, Matrix, Tensor};
use convfactor::WeightStore;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn forward(c: &mut Criterion) {
    let mut group = c.benchmark_group("forward");
    let std_spec = LayerSpec::standard(3, 32, 32, 1, 1).unwrap();
    let std_w = LayerWeights::random(&std_spec, &mut rng(1)).unwrap();
    let x = FeatureMap::random(32, 32, 32, &mut rng(2)).unwrap();
    group.bench_function("standard_3x3_32to32_at_32x32", |b| {
        b.iter(|| conv2d_forward(&x, &std_spec, &std_w).unwrap())
    });

    let ds_spec = LayerSpec::depthsep(3, 32, 32, 1, 1, 1).unwrap();
    let ds_w = LayerWeights::random(&ds_spec, &mut rng(3)).unwrap();
    group.bench_function("depthsep_3x3_32to32_at_32x32", |b| {
        b.iter(|| depthsep_forward(&x, &ds_spec, &ds_w).unwrap())
    });
    group.finish();
}

fn factorization(c: &mut Criterion) {
    let mut group = c.benchmark_group("factorization");
    group.sample_size(10);

    let kernel = Tensor::random(vec![3, 3, 64, 64], &mut rng(4)).unwrap();
    group.bench_function("hooi_3x3_64x64_rank16", |b| {
        b.iter(|| hooi_tucker2(&kernel, 16, 16).unwrap())
    });

    let unfolded = unfold(&kernel, 2).unwrap();
    group.bench_function("evbmf_64x576", |b| {
        b.iter(|| evbmf_rank(&unfolded).unwrap())
    });

    let m = Matrix::random(64, 256, &mut rng(5)).unwrap();
    group.bench_function("svd_64x256", |b| b.iter(|| svd(&m).unwrap()));
    group.finish();
}

fn container(c: &mut Criterion) {
    let store = WeightStore::generate(&convfactor::l2net(), 6).unwrap();
    let bytes = store.to_bytes();
    let mut group = c.benchmark_group("container");
    group.bench_function("serialize_l2net", |b| b.iter(|| store.to_bytes()));
    group.bench_function("parse_l2net", |b| {
        b.iter_batched(
            || bytes.clone(),
            |bs| WeightStore::from_bytes(&bs).unwrap(),
            BatchSize::SmallInput,
        )
    });
    group.finish();
}

criterion_group!(benches, forward, factorization, container);
criterion_main!(benches);
