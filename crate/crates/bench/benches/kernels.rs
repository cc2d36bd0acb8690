use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use keyhole_bench::{geometry, scene};
use keyhole_core::eval::{disambiguated_ssim, ssim, DisambiguationSearch, SsimParams};
use keyhole_core::forward::{assemble_system, render};
use keyhole_core::recon::e_step;
use keyhole_core::simulator::Plane;

fn forward(c: &mut Criterion) {
    let s = scene(64, 9);
    let pose = s.grid.poses()[40];
    c.bench_function("assemble 64x64", |b| {
        b.iter(|| assemble_system(&geometry(64), black_box(&pose), &s.model).unwrap())
    });
    c.bench_function("render 64x64", |b| {
        b.iter(|| render(&s.systems[40], black_box(&s.albedo)).unwrap())
    });
    let mut out = vec![0.0; 64 * 64];
    c.bench_function("adjoint 64x64", |b| {
        b.iter(|| s.systems[40].adjoint_add(black_box(&s.measurements[0].counts), 1.0, &mut out))
    });
}

fn posterior(c: &mut Criterion) {
    let s = scene(32, 9);
    let rho = s.albedo.values().as_slice().to_vec();
    let mut group = c.benchmark_group("e_step");
    group.sample_size(20);
    group.bench_function("193 x 81, 32x32", |b| {
        b.iter(|| e_step(&s.measurements, &s.systems, black_box(&rho), 200.0, 0.5).unwrap())
    });
    group.finish();
}

fn metrics(c: &mut Criterion) {
    let s = scene(64, 3);
    let truth = s.albedo.values();
    let recon = truth.map(|v| 0.8 * v + 0.05);
    let p = SsimParams::default();
    c.bench_function("ssim 64x64", |b| {
        b.iter(|| ssim(truth, black_box(&recon), &p).unwrap())
    });
    let mut group = c.benchmark_group("disambiguated_ssim");
    group.sample_size(10);
    let search = DisambiguationSearch::for_plane(Plane::ConstantY);
    group.bench_function("64x64 translations and flips", |b| {
        b.iter(|| disambiguated_ssim(truth, black_box(&recon), &search, &p).unwrap())
    });
    group.finish();
}

criterion_group!(benches, forward, posterior, metrics);
criterion_main!(benches);
