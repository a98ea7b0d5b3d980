use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use spml_bench::ledger;
use spml_core::market::settle;
use spml_core::{Outcome, Protocol, ScoringRuleSpec};

fn settlement(c: &mut Criterion) {
    let rule = ScoringRuleSpec::logarithmic(3);
    let mut group = c.benchmark_group("settle");
    for protocol in [
        Protocol::Srm,
        Protocol::ApSrm,
        Protocol::NmSrm,
        Protocol::ApNmSrm,
        Protocol::SpSrm,
    ] {
        for reports in [10, 100, 1000] {
            let l = ledger(protocol, 3, 10, reports);
            group.bench_with_input(BenchmarkId::new(protocol.name(), reports), &l, |b, l| {
                b.iter(|| settle(protocol, black_box(l), &rule, Outcome::new(0)).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, settlement);
criterion_main!(benches);
