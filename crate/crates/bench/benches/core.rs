use std::hint::black_box;

use autopeer_core::adversary::mc_inbound_takeover;
use autopeer_core::analytics::outbound_takeover_prob;
use autopeer_core::identity::{chain_create, verify_salt, NodeId, Salt};
use autopeer_core::scoring::outbound_score;
use autopeer_core::simulator::{run, SimConfig};
use criterion::{criterion_group, criterion_main, Criterion};

fn scoring(c: &mut Criterion) {
    let a = NodeId::from_bytes([1; 32]);
    let b = NodeId::from_bytes([2; 32]);
    let salt = Salt::public([3; 32]);
    c.bench_function("outbound_score", |bench| {
        bench.iter(|| outbound_score(black_box(&a), black_box(&b), black_box(&salt)))
    });
}

fn hash_chain(c: &mut Criterion) {
    let mut chain = chain_create([7; 32], 64).unwrap();
    let top = chain.current();
    for _ in 0..16 {
        chain.advance().unwrap();
    }
    let now = chain.current();
    c.bench_function("verify_salt 16 steps", |bench| {
        bench.iter(|| verify_salt(black_box(&now), black_box(&top), 16, 16))
    });
}

fn analytics(c: &mut Criterion) {
    c.bench_function("outbound_takeover_prob N_A=200 N=1000 L=50 k=4", |bench| {
        bench.iter(|| outbound_takeover_prob(black_box(200), 1000, 50, 4))
    });
    c.bench_function("mc_inbound_takeover 1e5 trials", |bench| {
        bench.iter(|| mc_inbound_takeover(20, 20, 4, black_box(100_000), 1))
    });
}

fn simulation(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulation");
    group.sample_size(10);
    let config = SimConfig { nodes: 100, k: 4, salt_interval: 100, max_ticks: 1000, ..SimConfig::default() };
    group.bench_function("N=100 1000 ticks", |bench| bench.iter(|| run(black_box(config.clone())).unwrap()));
    group.finish();
}

criterion_group!(benches, scoring, hash_chain, analytics, simulation);
criterion_main!(benches);
