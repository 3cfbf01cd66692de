//! Timing of the SVD, weight tables, graph partitioning and the semi-supervised fit.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use mmcl_core::bsgmp::{self, BipartiteGraph};
use mmcl_core::datagen::{
    random_model, sample_labeled_bipartite, sample_paired, sample_unpaired, seeded_rng,
};
use mmcl_core::linalg::{self, Mat};
use mmcl_core::losses::{self, LossSpec};
use mmcl_core::solvers;
use rand::Rng;

fn random_mat(rows: usize, cols: usize, seed: u64) -> Mat {
    let mut rng = seeded_rng(seed);
    Mat::from_fn(rows, cols, |_, _| rng.random::<f64>() - 0.5)
}

fn bench_svd(c: &mut Criterion) {
    let a = random_mat(60, 60, 1);
    c.bench_function("svd 60x60", |b| {
        b.iter(|| linalg::svd(black_box(&a)).unwrap())
    });
}

fn bench_weights(c: &mut Criterion) {
    let sims = random_mat(500, 500, 2);
    let spec = LossSpec::clip(0.5, 1.0, 1.0);
    c.bench_function("compute_weights clip n=500", |b| {
        b.iter(|| losses::compute_weights(black_box(&spec), black_box(&sims)).unwrap())
    });
}

fn bench_partition(c: &mut Criterion) {
    let model = random_model(40, 39, 10, 1.0 / 0.3, 1.0, 3).unwrap();
    let g = sample_labeled_bipartite(&model, 50, 10, 0.2, 4).unwrap();
    let graph = BipartiteGraph::new(g.x.rows(), g.xt.rows(), g.edges, None).unwrap();
    c.bench_function("bsgmp partition 500+500 k=10", |b| {
        b.iter(|| bsgmp::partition(black_box(&graph), 10, 0, bsgmp::DEFAULT_RESTARTS).unwrap())
    });
}

fn bench_semi(c: &mut Criterion) {
    let model = random_model(40, 39, 10, 1.0 / 0.3, 1.0, 5).unwrap();
    let paired = sample_paired(&model, 200, 0.0, 6).unwrap();
    let pool = sample_unpaired(&model, 800, 7).unwrap();
    let spec = LossSpec::clip(0.5, 2.0, 1.0);
    let mut group = c.benchmark_group("semi");
    group.sample_size(10);
    group.bench_function("fit_semisupervised n=200 N=800", |b| {
        b.iter(|| {
            solvers::fit_semisupervised(black_box(&paired), black_box(&pool), 10, &spec).unwrap()
        })
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_svd,
    bench_weights,
    bench_partition,
    bench_semi
);
criterion_main!(benches);
