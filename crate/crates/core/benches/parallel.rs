//! Benchmarks for the data-parallel hot paths.
//!
//! Benchmark IDs are identical with and without the `parallel` feature, so
//! criterion's saved baselines compare the two directly:
//!
//! ```text
//! cargo bench -p sparseprop -- --save-baseline parallel
//! cargo bench -p sparseprop --no-default-features -- --baseline parallel
//! ```

use criterion::{criterion_group, criterion_main, Criterion};

use sparseprop::meanfield::{eoc_solve, solve_m_for_vprime};
use sparseprop::sim::{self, Arch, NetworkSpec};
use sparseprop::train::{synthetic_dataset, train_sgd, TrainConfig};
use sparseprop::ActivationKind;

fn bench_monte_carlo(c: &mut Criterion) {
    let sol = eoc_solve(ActivationKind::ClippedRelu, 0.7, Some(1.45), 1.0).unwrap();
    c.bench_function("monte_carlo_variance_map/w1000_t64", |b| {
        b.iter(|| {
            sim::monte_carlo_variance_map(&sol.spec, &sol.params, 1.0, 1000, 64, 7).unwrap()
        })
    });
}

fn bench_forward_stats(c: &mut Criterion) {
    let m = solve_m_for_vprime(ActivationKind::ClippedRelu, 0.7, 1.0, 0.5).unwrap();
    let sol = eoc_solve(ActivationKind::ClippedRelu, 0.7, Some(m), 1.0).unwrap();
    let spec = NetworkSpec {
        arch: Arch::Dense,
        depth: 12,
        width: 512,
        kernel_half_width: 0,
        spatial_len: 0,
        activation: sol.spec,
        init: sol.params,
        seed: 3,
        first_layer_variance_preserving: true,
    };
    let net = sim::init_network(&spec).unwrap();
    let inputs: Vec<Vec<f64>> = (0..32)
        .map(|i| (0..512).map(|j| (((i * 512 + j) % 97) as f64 - 48.0) / 28.0).collect())
        .collect();
    c.bench_function("forward_stats/d12_w512_b32", |b| {
        b.iter(|| sim::forward_stats(&net, &inputs, Some(1.0)).unwrap())
    });
    c.bench_function("backward_stats/d12_w512_b32", |b| {
        b.iter(|| sim::backward_stats(&net, &inputs, Some(1.0)).unwrap())
    });
}

fn bench_sgd_epoch(c: &mut Criterion) {
    let sol = eoc_solve(ActivationKind::ClippedRelu, 0.8, Some(1.27), 1.0).unwrap();
    let spec = NetworkSpec {
        arch: Arch::Dense,
        depth: 8,
        width: 100,
        kernel_half_width: 0,
        spatial_len: 0,
        activation: sol.spec,
        init: sol.params,
        seed: 11,
        first_layer_variance_preserving: true,
    };
    let train = synthetic_dataset(10, 196, 1024, 4.0, 5).unwrap();
    let test = synthetic_dataset(10, 196, 128, 4.0, 6).unwrap();
    let cfg = TrainConfig {
        learning_rate: 0.1,
        epochs: 1,
        batch_size: 64,
        seed: 9,
        input_q: 1.0,
    };
    c.bench_function("train_sgd/d8_w100_n1024_e1", |b| {
        b.iter(|| train_sgd(&spec, &train, &test, &cfg).unwrap())
    });
}

criterion_group!(benches, bench_monte_carlo, bench_forward_stats, bench_sgd_epoch);
criterion_main!(benches);
