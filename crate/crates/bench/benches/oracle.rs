use criterion::{criterion_group, criterion_main, Criterion};
use spml_bench::delay_scenario;
use spml_core::oracle::{best_response, verify_theorem, PayoffModel};
use spml_core::{StrategySpace, TheoremId};

fn oracle(c: &mut Criterion) {
    let scenario = delay_scenario();
    let space = StrategySpace::default();
    c.bench_function("best_response/delay", |b| {
        b.iter(|| best_response(&scenario, 0, &space, PayoffModel::RealizedPayment).unwrap())
    });
    let mut group = c.benchmark_group("sweep");
    group.sample_size(10);
    group.bench_function("T5/10", |b| {
        b.iter(|| verify_theorem(TheoremId::T5, 10, 7).unwrap())
    });
    group.bench_function("T7/10", |b| {
        b.iter(|| verify_theorem(TheoremId::T7, 10, 7).unwrap())
    });
    group.finish();
}

criterion_group!(benches, oracle);
criterion_main!(benches);
