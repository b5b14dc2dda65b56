//! Shared fixtures for the criterion benchmarks.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sdegan::gan::{new_generator, TrainConfig};
use sdegan::preprocess::build_training_set;
use sdegan::{Conditioning, Mlp, PairingMode, SdeModel, TrainingSet, TransformKind};

/// A full-size CIR generator (4 x 200 hidden units) with random weights.
pub fn generator() -> Mlp<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let c = Conditioning::for_model(&SdeModel::default_cir(0.3));
    new_generator(c, &TrainConfig::default(), &mut rng).expect("valid sizes")
}

/// `rows x 3` generator inputs `[z, s_t, dt]`.
pub fn generator_batch(rows: usize) -> Array2<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    Array2::from_shape_fn((rows, 3), |(_, j)| match j {
        0 => rng.random_range(-3.0..3.0),
        1 => rng.random_range(0.01..0.3),
        _ => rng.random_range(0.05..2.0),
    })
}

pub fn cir_training_set(n: usize) -> TrainingSet {
    let m = SdeModel::default_cir(0.3);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    build_training_set(
        &m,
        TransformKind::default_for(&m),
        &[0.05, 0.1, 0.2, 0.4, 0.5, 0.67, 1.0, 2.0],
        &[0.01, 0.05, 0.1, 0.15, 0.2, 0.3],
        n,
        PairingMode::InverseCdf,
        &mut rng,
    )
    .expect("valid training set")
}
