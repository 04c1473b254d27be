use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use mvprobit::tmvn::{sample_tmvn, SmcConfig};
use mvprobit_bench::shifted_target;

fn bench_sample_tmvn(c: &mut Criterion) {
    let mut group = c.benchmark_group("sample_tmvn");
    group.sample_size(20);
    for &p in &[2usize, 4, 8] {
        let (orthant, mu, sigma) = shifted_target(p, 1.0);
        let cfg = SmcConfig {
            particles: 2000,
            ..SmcConfig::default()
        };
        group.bench_with_input(BenchmarkId::new("dim", p), &p, |b, _| {
            let mut seed = 0u64;
            b.iter(|| {
                seed += 1;
                sample_tmvn(&orthant, &mu, &sigma, &cfg, seed).unwrap()
            });
        });
    }
    group.finish();
}

fn bench_particle_counts(c: &mut Criterion) {
    let mut group = c.benchmark_group("sample_tmvn_particles");
    group.sample_size(20);
    let (orthant, mu, sigma) = shifted_target(4, 1.5);
    for &m in &[1000usize, 4000] {
        let cfg = SmcConfig {
            particles: m,
            ..SmcConfig::default()
        };
        group.bench_with_input(BenchmarkId::new("m", m), &m, |b, _| {
            let mut seed = 100u64;
            b.iter(|| {
                seed += 1;
                sample_tmvn(&orthant, &mu, &sigma, &cfg, seed).unwrap()
            });
        });
    }
    group.finish();
}

criterion_group!(benches, bench_sample_tmvn, bench_particle_counts);
criterion_main!(benches);
