use chartopt_core::gp::{gp_fit, suggest_next, GpConfig, Observation};
use chartopt_core::sobol::sobol_points;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn observations(n: usize) -> Vec<Observation> {
    sobol_points(n, 12, 3)
        .into_iter()
        .map(|point| {
            // smooth synthetic objective so fits are representative
            let y = point.coords.iter().map(|x| (x * 3.0).sin()).sum::<f64>();
            Observation {
                point,
                y,
                flags: Default::default(),
            }
        })
        .collect()
}

fn bench_surrogate(c: &mut Criterion) {
    let config = GpConfig::default();
    for n in [16usize, 50] {
        let obs = observations(n);
        c.bench_with_input(BenchmarkId::new("gp_fit", n), &obs, |b, obs| {
            b.iter(|| black_box(gp_fit(black_box(obs), &config).unwrap()))
        });
        let state = gp_fit(&obs, &config).unwrap();
        c.bench_with_input(BenchmarkId::new("suggest_next_512", n), &state, |b, state| {
            b.iter(|| black_box(suggest_next(black_box(state), 512, 7)))
        });
    }
}

criterion_group!(benches, bench_surrogate);
criterion_main!(benches);
