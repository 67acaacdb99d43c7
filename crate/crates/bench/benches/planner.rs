//! Whole-pipeline planning throughput: symbolic execution of every
//! layout strategy across the ring candidates, plus the analyses.

use criterion::{criterion_group, criterion_main, Criterion};
use hisa_core::compiler::CompileOptions;
use hisa_core::fixtures;

fn planning(c: &mut Criterion) {
    let mut group = c.benchmark_group("compile");
    group.sample_size(20);
    for f in [
        fixtures::conv_heavy(),
        fixtures::fc_heavy(),
        fixtures::activation_chain(),
    ] {
        group.bench_function(&f.name, |b| {
            b.iter(|| {
                hisa_core::compile(&f.circuit, &f.schema, &CompileOptions::default()).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, planning);
criterion_main!(benches);
