use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use wmtree_bench::{config, scenario, solve};
use wmtree_core::bundled::NAMES;
use wmtree_core::closedloop::{oracle_feasible_plans, DEFAULT_STATE_BUDGET};

fn search(c: &mut Criterion) {
    let mut g = c.benchmark_group("search");
    for name in NAMES {
        let s = scenario(name);
        let cfg = config(false, None);
        g.bench_with_input(BenchmarkId::from_parameter(name), &s, |b, s| {
            b.iter(|| black_box(solve(s, &cfg)))
        });
    }
    g.finish();
}

fn latency(c: &mut Criterion) {
    let s = scenario("task7");
    let mut g = c.benchmark_group("task7-latency-5ms");
    g.sample_size(10);
    for parallel in [false, true] {
        let cfg = config(parallel, Some(5));
        let label = if parallel { "parallel" } else { "sequential" };
        g.bench_function(label, |b| b.iter(|| black_box(solve(&s, &cfg))));
    }
    g.finish();
}

fn oracle(c: &mut Criterion) {
    let s = scenario("task7");
    c.bench_function("oracle/task7", |b| {
        b.iter(|| black_box(oracle_feasible_plans(&s, 8, DEFAULT_STATE_BUDGET).unwrap()))
    });
}

criterion_group!(benches, search, latency, oracle);
criterion_main!(benches);
