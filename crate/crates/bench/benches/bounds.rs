use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use twrn_crb::fim::{crb, exact_fim, gammas, gammas_xy, mcrb, GammaQuadrature};
use twrn_crb::likelihood::{log_likelihood, score, LikelihoodMethod};
use twrn_crb::oracle::mc_fim;
use twrn_crb::quadrature::hermite_rule;
use twrn_crb_bench::{observation, scenario};

const ORDERS: [usize; 4] = [4, 16, 64, 256];

fn bench_gammas(c: &mut Criterion) {
    let quad = GammaQuadrature::default();
    let mut g = c.benchmark_group("gammas");
    for m in ORDERS {
        let (theta, sc) = scenario(m, 20.0, 32);
        g.bench_with_input(BenchmarkId::new("one_dim", m), &m, |b, _| {
            b.iter(|| gammas(black_box(&theta), black_box(&sc), &quad).unwrap())
        });
    }
    let (theta, sc) = scenario(16, 20.0, 32);
    g.sample_size(10);
    g.bench_function("two_dim/16", |b| b.iter(|| gammas_xy(black_box(&theta), &sc, &quad).unwrap()));
    g.finish();
}

fn bench_bounds(c: &mut Criterion) {
    let quad = GammaQuadrature::default();
    let mut g = c.benchmark_group("bounds");
    for m in ORDERS {
        let (theta, sc) = scenario(m, 10.0, 32);
        g.bench_with_input(BenchmarkId::new("exact_crb", m), &m, |b, _| {
            b.iter(|| crb(&exact_fim(black_box(&theta), &sc, &quad).unwrap()).unwrap())
        });
    }
    let (theta, sc) = scenario(64, 10.0, 32);
    g.bench_function("mcrb", |b| b.iter(|| mcrb(black_box(&theta), &sc).unwrap()));
    g.finish();
}

fn bench_likelihood(c: &mut Criterion) {
    let mut g = c.benchmark_group("log_likelihood");
    for m in ORDERS {
        let (theta, sc) = scenario(m, 10.0, 256);
        let obs = observation(&theta, &sc);
        for (name, method) in [("direct", LikelihoodMethod::Direct), ("factorized", LikelihoodMethod::Factorized)] {
            g.bench_with_input(BenchmarkId::new(name, m), &m, |b, _| {
                b.iter(|| log_likelihood(black_box(&obs), &theta, &sc, method).unwrap())
            });
        }
        g.bench_with_input(BenchmarkId::new("score", m), &m, |b, _| {
            b.iter(|| score(black_box(&obs), &theta, &sc).unwrap())
        });
    }
    g.finish();
}

fn bench_oracle(c: &mut Criterion) {
    let (theta, sc) = scenario(4, 10.0, 8);
    let mut g = c.benchmark_group("oracle");
    g.sample_size(10);
    g.bench_function("mc_fim/1e4", |b| b.iter(|| mc_fim(black_box(&theta), &sc, 10_000, 1).unwrap()));
    g.finish();
}

fn bench_rules(c: &mut Criterion) {
    // rules are cached after the first call
    c.bench_function("hermite_rule/cached_256", |b| b.iter(|| hermite_rule(black_box(256)).unwrap()));
}

criterion_group!(benches, bench_gammas, bench_bounds, bench_likelihood, bench_oracle, bench_rules);
criterion_main!(benches);
