use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use skelnet_bench::{crnn, seeds, skelnet, SYNTHETIC_DIM};
use skelnet_core::models::{gru_cell, predict};
use skelnet_core::rotations::{
    euler_to_rotmat, expmap_to_rotmat, rotmat_to_euler, rotmat_to_expmap, EulerTriple, ExpMap,
};
use skelnet_core::skeleton::SchemeName;
use skelnet_core::{Tape, Tensor};

fn rotations(c: &mut Criterion) {
    let e = EulerTriple([0.3, -1.1, 2.0]);
    let v = ExpMap([0.4, -0.2, 1.3]);
    c.bench_function("euler_to_rotmat", |b| b.iter(|| euler_to_rotmat(black_box(e))));
    c.bench_function("expmap_to_rotmat", |b| b.iter(|| expmap_to_rotmat(black_box(v))));
    let r = expmap_to_rotmat(v);
    c.bench_function("rotmat_to_euler", |b| b.iter(|| rotmat_to_euler(black_box(&r))));
    c.bench_function("rotmat_to_expmap", |b| b.iter(|| rotmat_to_expmap(black_box(&r)).unwrap()));
}

fn gru(c: &mut Criterion) {
    let units = 64;
    let (_, store) = crnn(units).unwrap();
    let x = seeds(1, SYNTHETIC_DIM);
    c.bench_function("gru_cell_forward_backward_64", |b| {
        b.iter(|| {
            let mut tape = Tape::new();
            let xv = tape.constant(x.clone());
            let h = tape.constant(Tensor::zeros(1, units));
            let h1 = gru_cell(&mut tape, &store, "gru", xv, h).unwrap();
            let loss = tape.sum_of_squares(h1).unwrap();
            let mut grads = store.clone();
            tape.backward(loss, &mut grads).unwrap();
            black_box(grads.len())
        })
    });
}

fn rollouts(c: &mut Criterion) {
    let s = seeds(4, SYNTHETIC_DIM);
    for scheme in [SchemeName::FivePart, SchemeName::Whole] {
        let (model, store) = skelnet(scheme).unwrap();
        c.bench_function(&format!("skelnet_{scheme}_predict_10"), |b| {
            b.iter(|| predict(&model, &store, black_box(&s), 10).unwrap())
        });
    }
    let (model, store) = crnn(64).unwrap();
    c.bench_function("crnn_64_predict_10", |b| b.iter(|| predict(&model, &store, black_box(&s), 10).unwrap()));
}

criterion_group!(benches, rotations, gru, rollouts);
criterion_main!(benches);
