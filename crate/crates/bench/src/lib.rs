//! Shared setup for the criterion benches: representative models and data
//! built from fixed seeds so runs are comparable across checkouts.

use ndarray::Array2;
use tabshift_core::contrastive::{ContrastiveModel, PretrainConfig};
use tabshift_core::data::{Dataset, Targets, TaskKind};
use tabshift_core::nn::{Activation, Network};
use tabshift_core::seed;

pub const BATCH: usize = 256;
pub const DIM: usize = 32;

pub fn bench_network() -> Network {
    let mut rng = seed::rng(1, "bench-net");
    Network::glorot_uniform(
        &[DIM, 256, 128],
        &[Activation::ReLU, Activation::Identity],
        &mut rng,
    )
    .unwrap()
}

pub fn bench_batch(rows: usize) -> Array2<f64> {
    let mut rng = seed::rng(2, "bench-batch");
    Array2::from_shape_fn((rows, DIM), |_| {
        use rand::Rng;
        rng.random_range(-1.0..1.0)
    })
}

pub fn bench_model() -> ContrastiveModel {
    let cfg = PretrainConfig {
        hidden: 128,
        latent: 64,
        projection: 32,
        seed: 3,
        ..Default::default()
    };
    ContrastiveModel::init(DIM, &cfg).unwrap()
}

pub fn bench_dataset(rows: usize) -> Dataset {
    let features = bench_batch(rows);
    Dataset::from_numeric(features, Targets::Values(vec![0.0; rows]), TaskKind::Regression).unwrap()
}
