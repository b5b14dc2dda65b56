use criterion::{criterion_group, criterion_main, Criterion};

use sdegan::gan::{train, TrainConfig};
use sdegan::GanVariant;
use sdegan_bench::cir_training_set;

fn iterations(c: &mut Criterion) {
    let set = cir_training_set(20_000);
    let cfg = TrainConfig {
        epochs: 1,
        iterations_per_epoch: Some(5),
        eval_every: 5,
        eval_samples: 1000,
        checkpoint_every_epochs: 0,
        ..TrainConfig::default()
    };
    let mut group = c.benchmark_group("training");
    group.sample_size(10);
    for variant in [GanVariant::Vanilla, GanVariant::Supervised] {
        group.bench_function(format!("5 iterations {}", variant.name()), |b| {
            b.iter(|| train(variant, &set, &cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, iterations);
criterion_main!(benches);
