use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use latentmove_core::condition::{quantized_tracks, replicate_features};
use latentmove_core::data::{make_blob_dataset, MotionFamily};
use latentmove_core::model::{
    gaussian_latent, sample, ConditionBundle, DenoiserDims, FieldInput, ToyDenoiser,
};
use latentmove_core::{LatentGeometry, MockCodec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn conditioning(c: &mut Criterion) {
    let geom = LatentGeometry::toy();
    let codec = MockCodec::new(geom).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let clip = make_blob_dataset(&mut rng, 1, &geom, MotionFamily::PiecewiseLinear).remove(0);
    let dense = clip.dense_tracks(16);
    let z = codec.encode(&clip.video).unwrap();

    c.bench_function("quantize 256 tracks", |b| {
        b.iter(|| quantized_tracks(black_box(&dense), &codec).unwrap())
    });
    let q = quantized_tracks(&dense, &codec).unwrap();
    c.bench_function("replicate 256 tracks", |b| {
        b.iter_batched(
            || ChaCha8Rng::seed_from_u64(2),
            |mut r| replicate_features(black_box(&z), &q, &mut r).unwrap(),
            BatchSize::SmallInput,
        )
    });
    c.bench_function("codec encode+decode", |b| {
        b.iter(|| {
            codec
                .decode(&codec.encode(black_box(&clip.video)).unwrap())
                .unwrap()
        })
    });
}

fn model(c: &mut Criterion) {
    let geom = LatentGeometry::toy();
    let dims = DenoiserDims::for_geometry(&geom, 64);
    let model = ToyDenoiser::new(dims, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let shape = dims.latent_shape();
    let xs: Vec<_> = (0..8).map(|_| gaussian_latent(shape, &mut rng)).collect();
    let conds: Vec<_> = (0..8).map(|_| gaussian_latent(shape, &mut rng)).collect();
    let targets: Vec<_> = (0..8).map(|_| gaussian_latent(shape, &mut rng)).collect();
    let batch: Vec<_> = (0..8)
        .map(|i| FieldInput {
            x_t: &xs[i],
            t: 0.1 * (i + 1) as f64,
            condition: &conds[i],
        })
        .collect();
    let target_refs: Vec<_> = targets.iter().collect();

    c.bench_function("loss and gradient, batch 8", |b| {
        b.iter(|| model.loss_and_grad(black_box(&batch), &target_refs).unwrap())
    });
    let bundle = ConditionBundle::new(conds[0].clone(), conds[1].clone()).unwrap();
    let mut group = c.benchmark_group("sampling");
    group.sample_size(20);
    group.bench_function("50 Euler steps with guidance", |b| {
        b.iter_batched(
            || ChaCha8Rng::seed_from_u64(4),
            |mut r| sample(&model, black_box(&bundle), 5.0, 50, &mut r).unwrap(),
            BatchSize::SmallInput,
        )
    });
    group.finish();
}

criterion_group!(benches, conditioning, model);
criterion_main!(benches);
