use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use loewner_core::chordal::{forward, unzip_curve, vertical_segment};
use loewner_core::driver::sample_brownian_driver;
use loewner_core::geometry::{discrete_frechet, hausdorff_distance, PointCloud};
use loewner_core::rng::stream;
use loewner_core::{radial, Driver, Mode};
use std::hint::black_box;

fn brownian(n: usize, mode: Mode) -> Driver {
    sample_brownian_driver(2.0, 1.0, n, mode, &mut stream(7, &[n as u64])).unwrap()
}

fn chordal_forward(c: &mut Criterion) {
    let mut g = c.benchmark_group("chordal_forward");
    for n in [128, 512, 2048] {
        let d = brownian(n, Mode::Chordal);
        g.bench_with_input(BenchmarkId::from_parameter(n), &d, |b, d| b.iter(|| forward(black_box(d)).unwrap()));
    }
    g.finish();
}

fn chordal_unzip(c: &mut Criterion) {
    let mut g = c.benchmark_group("chordal_unzip");
    for n in [256, 1024] {
        let pts = vertical_segment(1.0, n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &pts, |b, p| b.iter(|| unzip_curve(black_box(p)).unwrap()));
    }
    g.finish();
}

fn radial_forward(c: &mut Criterion) {
    let mut g = c.benchmark_group("radial_forward");
    g.sample_size(10);
    for n in [64, 256] {
        let d = brownian(n, Mode::Radial);
        g.bench_with_input(BenchmarkId::from_parameter(n), &d, |b, d| {
            b.iter(|| radial::forward(black_box(d)).unwrap())
        });
    }
    g.finish();
}

fn metrics(c: &mut Criterion) {
    let a = forward(&brownian(1024, Mode::Chordal)).unwrap();
    let b = forward(&brownian(1023, Mode::Chordal)).unwrap();
    let (ca, cb) = (PointCloud::from_trace(&a).unwrap(), PointCloud::from_trace(&b).unwrap());
    c.bench_function("hausdorff_1024", |bn| bn.iter(|| hausdorff_distance(black_box(&ca), black_box(&cb))));
    c.bench_function("frechet_1024", |bn| bn.iter(|| discrete_frechet(black_box(a.points()), black_box(b.points()))));
}

criterion_group!(benches, chordal_forward, chordal_unzip, radial_forward, metrics);
criterion_main!(benches);
