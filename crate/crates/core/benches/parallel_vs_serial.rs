//! Parallel-vs-sequential timings for the three hot loops: batch scoring,
//! per-pair discretized KL, and risk-grid cell evaluation. With the default
//! `parallel` feature the `par` group runs on rayon; `seq` is the plain
//! iterator path. Both produce identical output, so the comparison is purely
//! about throughput.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use osr_core::data::gen_blobs;
use osr_core::eval::kl_discretized;
use osr_core::netcore::TrainConfig;
use osr_core::openset::{recognize, train_bank, BaselineKind, CalibratedModel};
use osr_core::{openset, par};

fn fixture() -> (CalibratedModel, Vec<Vec<f64>>) {
    let data = gen_blobs(5, 8, 2, 5.0, 80).unwrap();
    let cfg = TrainConfig {
        learning_rate: 0.1,
        epochs: 300,
        batch_size: 32,
        momentum: 0.9,
        seed: 5,
        target_loss: 5e-3,
    };
    let bank = train_bank(&data, &[16], &cfg, BaselineKind::None).unwrap();
    let evt = openset::calibrate(&bank, &data, 0.2, openset::MIN_TAIL).unwrap();
    let model = CalibratedModel {
        bank,
        evt,
        theta: 0.5,
        alpha: 0.2,
        head_topology: "separate_per_class".into(),
    };
    let queries = data.features.clone();
    (model, queries)
}

fn bench_batch_recognition(c: &mut Criterion) {
    let (model, queries) = fixture();
    let mut group = c.benchmark_group("batch_recognition");
    group.bench_with_input(BenchmarkId::new("par", queries.len()), &queries, |b, q| {
        b.iter(|| par::map_collect(q, |x| recognize(&model, x).unwrap()))
    });
    group.bench_with_input(BenchmarkId::new("seq", queries.len()), &queries, |b, q| {
        b.iter(|| par::map_collect_seq(q, |x| recognize(&model, x).unwrap()))
    });
    group.finish();
}

fn bench_pairwise_kl(c: &mut Criterion) {
    let (model, queries) = fixture();
    // One representation cloud per class, compared all-pairs.
    let reps: Vec<Vec<Vec<f64>>> = model
        .bank
        .class_labels
        .iter()
        .enumerate()
        .map(|(i, _)| {
            queries
                .iter()
                .skip(i)
                .step_by(model.bank.n_classes())
                .map(|x| openset::score(&model.bank, x).unwrap())
                .collect()
        })
        .collect();
    let pairs: Vec<(usize, usize)> = (0..reps.len())
        .flat_map(|i| (0..reps.len()).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    let mut group = c.benchmark_group("pairwise_kl");
    group.bench_function("par", |b| {
        b.iter(|| {
            par::map_collect(&pairs, |&(i, j)| {
                kl_discretized(&reps[i], &reps[j], 8, 7).unwrap()
            })
        })
    });
    group.bench_function("seq", |b| {
        b.iter(|| {
            par::map_collect_seq(&pairs, |&(i, j)| {
                kl_discretized(&reps[i], &reps[j], 8, 7).unwrap()
            })
        })
    });
    group.finish();
}

fn bench_grid_scoring(c: &mut Criterion) {
    let (model, _) = fixture();
    let net = &model.bank.heads[0];
    let res = 96usize;
    let cells: Vec<(usize, usize)> = (0..res)
        .flat_map(|i| (0..res).map(move |j| (i, j)))
        .collect();
    let eval_cell = |&(i, j): &(usize, usize)| {
        let x = -12.0 + 24.0 * i as f64 / (res - 1) as f64;
        let y = -12.0 + 24.0 * j as f64 / (res - 1) as f64;
        net.forward(&[x, y]).unwrap().output[0]
    };
    let mut group = c.benchmark_group("grid_scoring");
    group.bench_function("par", |b| {
        b.iter(|| black_box(par::map_collect(&cells, eval_cell)))
    });
    group.bench_function("seq", |b| {
        b.iter(|| black_box(par::map_collect_seq(&cells, eval_cell)))
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_batch_recognition,
    bench_pairwise_kl,
    bench_grid_scoring
);
criterion_main!(benches);
