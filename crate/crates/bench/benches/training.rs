use criterion::{criterion_group, criterion_main, Criterion};
use snode_bench::{batch_of, model, vbe_state};
use snode_core::node::{integrate_batch, loss_gradient, stable_substeps, Variant};
use snode_core::System;
use std::hint::black_box;

fn mlp_passes(c: &mut Criterion) {
    let d = 128;
    let m = model(System::Vbe, Variant::Nonlinear, d, 200);
    let x = batch_of(&vbe_state(d, 1), 256);
    c.bench_function("mlp_forward_b256_d128_h200", |b| b.iter(|| m.mlp.forward_batch(black_box(x.view())).unwrap()));
    let (y, _) = m.mlp.forward_batch(x.view()).unwrap();
    c.bench_function("mlp_forward_backward_b256_d128_h200", |b| {
        b.iter(|| {
            let (_, tape) = m.mlp.forward_batch(black_box(x.view())).unwrap();
            m.mlp.backward_batch(tape, y.view()).unwrap()
        })
    });
}

fn gradient_step(c: &mut Criterion) {
    let d = 128;
    let x = batch_of(&vbe_state(d, 2), 64);
    let mut group = c.benchmark_group("rk4_adjoint_gradient_b64_d128");
    group.sample_size(20);
    for variant in [Variant::Nonlinear, Variant::FixedLinear, Variant::LearnedLinear] {
        let m = model(System::Vbe, variant, d, 64);
        let steps = stable_substeps(m.linear_spectral_radius(), 0.05, 5);
        let y = integrate_batch(&m, x.view(), 0.05, steps).unwrap() * 1.01;
        group.bench_function(variant.to_string(), |b| {
            b.iter(|| loss_gradient(black_box(&m), x.view(), y.view(), 0.05, steps).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, mlp_passes, gradient_step);
criterion_main!(benches);
