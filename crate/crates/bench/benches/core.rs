use criterion::{criterion_group, criterion_main, Criterion};
use ndarray::{Array1, Array2};
use std::hint::black_box;

use tabshift_bench::{bench_batch, bench_dataset, bench_model, bench_network, BATCH};
use tabshift_core::continual::{compute_fisher, FisherConfig};
use tabshift_core::contrastive::nt_xent;
use tabshift_core::data::{corrupt, CorruptionConfig};
use tabshift_core::nn::squared_error;
use tabshift_core::oodsplit::{fit_openmax, openmax_probs};
use tabshift_core::seed;

fn forward_backward(c: &mut Criterion) {
    let net = bench_network();
    let x = bench_batch(BATCH);
    let targets = Array2::zeros((BATCH, net.output_dim()));

    c.bench_function("forward_256x32", |b| {
        b.iter(|| black_box(net.infer(black_box(&x)).unwrap()))
    });
    c.bench_function("forward_backward_256x32", |b| {
        b.iter(|| {
            let cache = net.forward(black_box(&x)).unwrap();
            let (_, up) = squared_error(cache.output(), &targets).unwrap();
            black_box(net.backward(&cache, &up).unwrap())
        })
    });
}

fn contrastive_loss(c: &mut Criterion) {
    let mut rng = seed::rng(4, "bench-ntx");
    let z_a = Array2::from_shape_fn((BATCH, 64), |_| {
        use rand::Rng;
        rng.random_range(-1.0..1.0)
    });
    let z_b = z_a.clone() + 0.01;
    c.bench_function("nt_xent_256x64", |b| {
        b.iter(|| black_box(nt_xent(black_box(&z_a), black_box(&z_b), 0.5).unwrap()))
    });
}

fn detector_scoring(c: &mut Criterion) {
    let mut rng = seed::rng(5, "bench-omx");
    let acts = Array2::from_shape_fn((300, 8), |(i, j)| {
        use rand::Rng;
        let class = i % 8;
        if j == class {
            4.0 + rng.random_range(-0.5..0.5)
        } else {
            rng.random_range(-0.5..0.5)
        }
    });
    let labels: Vec<usize> = (0..300).map(|i| i % 8).collect();
    let model = fit_openmax(&acts, &labels, &labels, 8, 20, 3).unwrap();
    let activation = Array1::from_shape_fn(8, |_| {
        use rand::Rng;
        rng.random_range(-4.0..4.0)
    });
    c.bench_function("openmax_probs_k8", |b| {
        b.iter(|| black_box(openmax_probs(&model, black_box(&activation.view())).unwrap()))
    });
}

fn corruption_and_fisher(c: &mut Criterion) {
    let ds = bench_dataset(1024);
    let marginals = ds.marginals();
    let batch = bench_batch(BATCH);
    c.bench_function("corrupt_256x32", |b| {
        b.iter(|| {
            black_box(
                corrupt(
                    black_box(&batch),
                    &marginals,
                    &CorruptionConfig { rate: 0.3, seed: 9 },
                )
                .unwrap(),
            )
        })
    });

    let model = bench_model();
    let small = bench_dataset(256);
    c.bench_function("fisher_256rows", |b| {
        b.iter(|| {
            black_box(
                compute_fisher(
                    &model,
                    &small,
                    &FisherConfig {
                        batch_size: 64,
                        max_samples: 256,
                        seed: 10,
                        ..Default::default()
                    },
                )
                .unwrap(),
            )
        })
    });
}

criterion_group!(
    benches,
    forward_backward,
    contrastive_loss,
    detector_scoring,
    corruption_and_fisher
);
criterion_main!(benches);
