use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use detnet_bench::{network, samples};
use detnet_core::detnet::{detect, forward};
use detnet_core::training::backward;

fn passes(c: &mut Criterion) {
    let mut group = c.benchmark_group("detnet");
    for k in [4, 8] {
        let params = network(k);
        let s = &samples(k, 1, 12.0)[0];
        let layers = params.num_layers();
        group.bench_with_input(BenchmarkId::new("forward", k), s, |b, s| b.iter(|| forward(&params, &s.h, &s.y)));
        group.bench_with_input(BenchmarkId::new("detect_exit_third", k), s, |b, s| {
            b.iter(|| detect(&params, &s.h, &s.y, layers.div_ceil(3)))
        });
        group.bench_with_input(BenchmarkId::new("backward", k), s, |b, s| {
            b.iter(|| backward(&params, &s.h, &s.y, &s.x))
        });
    }
    group.finish();
}

criterion_group!(benches, passes);
criterion_main!(benches);
