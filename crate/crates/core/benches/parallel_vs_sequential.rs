use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use num_complex::Complex64;

use squidqct::exec::Execution;
use squidqct::lyapunov::{embed, oracles, stretching, EmbeddingConfig};
use squidqct::validation::{master_equation, small_instance};

fn modes() -> [(&'static str, Execution); 2] {
    [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)]
}

fn ensemble(c: &mut Criterion) {
    let mut g = c.benchmark_group("qsd_ensemble");
    g.sample_size(10);
    let m = small_instance();
    let alpha = Complex64::new(0.877, -0.566);
    for (name, exec) in modes() {
        g.bench_with_input(BenchmarkId::new(name, 64), &exec, |b, &exec| {
            b.iter(|| master_equation(&m, 0.2, alpha, 12, 0.5, 0.0025, 64, 1, exec).unwrap())
        });
    }
    g.finish();
}

fn kantz(c: &mut Criterion) {
    let mut g = c.benchmark_group("kantz_stretching");
    g.sample_size(10);
    let series = oracles::henon_series(20_000, 1.4, 0.3);
    let cfg = EmbeddingConfig { delay: 1, dim: 2, max_horizon: 40, ..EmbeddingConfig::default() };
    let cloud = embed(&series, &cfg).unwrap();
    for (name, exec) in modes() {
        g.bench_with_input(BenchmarkId::new(name, series.len()), &exec, |b, &exec| {
            b.iter(|| stretching(&cloud, &series, &cfg, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, ensemble, kantz);
criterion_main!(benches);
