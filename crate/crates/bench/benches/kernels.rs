use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use ndarray::Array2;

use sdegan::special::{ncx2_cdf, ncx2_quantile, Ncx2Params};
use sdegan::SdeModel;
use sdegan_bench::{generator, generator_batch};

fn special(c: &mut Criterion) {
    let feller = Ncx2Params::new(4.0, 38.03).unwrap();
    let non_feller = Ncx2Params::new(0.44, 38.03).unwrap();
    c.bench_function("ncx2_cdf df=4", |b| b.iter(|| ncx2_cdf(black_box(40.0), feller)));
    c.bench_function("ncx2_cdf df=0.44", |b| b.iter(|| ncx2_cdf(black_box(40.0), non_feller)));
    c.bench_function("ncx2_quantile df=4", |b| b.iter(|| ncx2_quantile(black_box(0.3), feller)));
    c.bench_function("ncx2_quantile df=0.44", |b| b.iter(|| ncx2_quantile(black_box(0.3), non_feller)));
    let m = SdeModel::default_cir(0.3);
    c.bench_function("cir step_from_z dt=1", |b| b.iter(|| m.step_from_z(0.1, 1.0, black_box(0.7))));
    c.bench_function("cir step_from_z dt=0.05", |b| b.iter(|| m.step_from_z(0.01, 0.05, black_box(-1.2))));
}

fn network(c: &mut Criterion) {
    let g = generator();
    let x = generator_batch(1000);
    c.bench_function("generator forward 1000 rows", |b| b.iter(|| g.forward(black_box(x.view()))));
    let cache = g.forward(x.view()).unwrap();
    c.bench_function("generator backward 1000 rows", |b| {
        b.iter(|| g.backward(&cache, Array2::ones((1000, 1))))
    });
}

criterion_group!(benches, special, network);
criterion_main!(benches);
