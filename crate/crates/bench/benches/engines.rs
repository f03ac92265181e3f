use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dynleak_bench::{corpus_workloads, password_checker, password_request};
use dynleak_core::analysis::{analyze, Engine};

fn corpus(c: &mut Criterion) {
    let mut group = c.benchmark_group("corpus");
    group.sample_size(20);
    for w in corpus_workloads().expect("corpus loads") {
        group.bench_with_input(BenchmarkId::new(w.engine.name(), &w.name), &w, |b, w| {
            b.iter(|| analyze(&w.program, &w.request).expect("analysis succeeds"))
        });
    }
    group.finish();
}

fn password_scaling(c: &mut Criterion) {
    let mut group = c.benchmark_group("password");
    group.sample_size(10);
    for n in [4, 8, 12] {
        let program = password_checker(n);
        for engine in [Engine::Oracle, Engine::CnfCount, Engine::Rmc] {
            let req = password_request(n, engine);
            group.bench_with_input(BenchmarkId::new(engine.name(), n), &req, |b, req| {
                b.iter(|| analyze(&program, req).expect("analysis succeeds"))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, corpus, password_scaling);
criterion_main!(benches);
