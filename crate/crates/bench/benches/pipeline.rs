use std::collections::HashSet;

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use textgap::corpus::{tokenize, TokenRules};
use textgap::embedreg;
use textgap::fightin::{self, PriorSpec};
use textgap_bench::{fixture, observations};

const TWEET: &str = "So proud of our KIDS today!!! #backtoschool @teacher https://t.co/xyz \
                     can't believe it's been 2 years... well-deserved 🎉";

fn bench_tokenize(c: &mut Criterion) {
    let rules = TokenRules::default();
    let mut g = c.benchmark_group("tokenize");
    g.throughput(Throughput::Bytes(TWEET.len() as u64));
    g.bench_function("tweet", |b| b.iter(|| tokenize(black_box(TWEET), &rules)));
    g.finish();
}

fn bench_permutation_null(c: &mut Criterion) {
    let mut g = c.benchmark_group("permutation_null");
    g.sample_size(10);
    for (users, dim) in [(500, 50), (5_000, 100)] {
        let obs = observations(&fixture(users, dim, 3));
        g.bench_with_input(
            BenchmarkId::new("P=200", format!("{}x{dim}", obs.len())),
            &obs,
            |b, obs| b.iter(|| embedreg::permutation_null(obs, 200, 11).unwrap()),
        );
    }
    g.finish();
}

fn bench_log_odds(c: &mut Criterion) {
    let f = fixture(5_000, 1, 5);
    let exclude: HashSet<String> = ["kids".to_string()].into();
    let counts = fightin::count_terms(&f.docs, &f.groups, 2, 1, &exclude, None).unwrap();
    let prior = PriorSpec::informative(&counts, 500.0).unwrap();
    c.bench_function("count_terms/10k docs", |b| {
        b.iter(|| fightin::count_terms(&f.docs, &f.groups, 2, 1, &exclude, None).unwrap())
    });
    c.bench_function("weighted_log_odds", |b| {
        b.iter(|| fightin::weighted_log_odds(&counts, &prior).unwrap())
    });
}

criterion_group!(benches, bench_tokenize, bench_permutation_null, bench_log_odds);
criterion_main!(benches);
