use criterion::{criterion_group, criterion_main, Criterion};
use nahmlab::bergmann::{compute_bergmann, oscillator, LiftedPair};
use nahmlab::diracop::setting_for;
use nahmlab::gauge::{bpst_field, flat_field};
use nahmlab::nahm::fiber;
use nahmlab::quad::{ball_rule, QuadOrders};

fn bergmann(c: &mut Criterion) {
    let flat = flat_field(1).unwrap();
    let fset = setting_for(&flat, 1.0, QuadOrders::default(), 1e-12).unwrap();
    c.bench_function("bergmann flat N=4", |b| b.iter(|| compute_bergmann(&flat, &fset, 4, 1e-8, 1e2).unwrap()));
    let bpst = bpst_field(0.3, [0.0; 4]).unwrap();
    let bset = setting_for(&bpst, 1.0, QuadOrders::default(), 1e-12).unwrap();
    let mut g = c.benchmark_group("bpst");
    g.sample_size(10);
    g.bench_function("bergmann bpst N=2", |b| b.iter(|| compute_bergmann(&bpst, &bset, 2, 1e-8, 1e2).unwrap()));
    let space = compute_bergmann(&bpst, &bset, 2, 1e-8, 1e2).unwrap();
    g.bench_function("oscillator bpst N=2", |b| b.iter(|| oscillator(&space).unwrap()));
    g.finish();
}

fn fiber_svd(c: &mut Criterion) {
    let flat = flat_field(1).unwrap();
    let set = setting_for(&flat, 1.0, QuadOrders::default(), 1e-12).unwrap();
    let pair = LiftedPair::build(&flat, &set, 6, 1e-8, 1e2).unwrap();
    c.bench_function("fiber N=6", |b| b.iter(|| fiber(&pair, &[0.1, 0.0, -0.1, 0.05], 1e-3, 1e2).unwrap()));
}

fn energy(c: &mut Criterion) {
    let f = bpst_field(0.15, [0.0; 4]).unwrap();
    let rule = ball_rule(QuadOrders::default(), 1.0).unwrap();
    c.bench_function("bpst energy density sweep", |b| b.iter(|| rule.integrate_real(|x| f.energy_density(x))));
}

criterion_group!(benches, bergmann, fiber_svd, energy);
criterion_main!(benches);
