//! Criterion benchmarks for the fair-share solver, the flow simulator and
//! full ping-pong sweeps.

use std::collections::BTreeMap;
use std::hint::black_box;

use criterion::{BenchmarkId, Criterion};
use multiblock_core::bench::{run_sweep, BenchSpec};
use multiblock_core::netsim::{max_min_rates, simulate, Flow, FlowId};
use multiblock_core::{
    allocate_block, build_cluster, AllocationRequest, ClusterConfig, Mode, TierName, WorkloadType,
};

/// `n` flows over `n` links where flow `i` crosses links `i` and `(i + 1) % n`.
fn ring(n: u32) -> (Vec<Vec<u32>>, BTreeMap<u32, f64>) {
    let paths = (0..n).map(|i| vec![i, (i + 1) % n]).collect();
    let caps = (0..n).map(|i| (i, 1e9 + f64::from(i) * 1e6)).collect();
    (paths, caps)
}

fn fair_share(c: &mut Criterion) {
    let mut group = c.benchmark_group("max_min_rates");
    for n in [4u32, 32, 256] {
        let (paths, caps) = ring(n);
        let flows: Vec<(FlowId, &[u32])> = paths
            .iter()
            .enumerate()
            .map(|(i, p)| (FlowId(i as u64), p.as_slice()))
            .collect();
        group.bench_with_input(BenchmarkId::from_parameter(n), &flows, |b, flows| {
            b.iter(|| max_min_rates(black_box(flows), &caps))
        });
    }
    group.finish();
}

fn relay_simulation(c: &mut Criterion) {
    let state = build_cluster(&ClusterConfig {
        mode: Mode::Conventional,
        worker_pool_size: 64,
        ..ClusterConfig::default()
    })
    .unwrap();
    let (state, block) = allocate_block(
        &state,
        &AllocationRequest::new("bench", 64, WorkloadType::IoIntensive),
    )
    .unwrap();
    let mut group = c.benchmark_group("simulate_relay");
    for n in [2usize, 8, 32] {
        let flows: Vec<Flow> = (0..n)
            .map(|i| {
                Flow::new(i as u64, block.workers[i], block.workers[i + 32], 1 << 20)
                    .starting_at(i as f64 * 100.0)
            })
            .collect();
        group.bench_with_input(BenchmarkId::from_parameter(n), &flows, |b, flows| {
            b.iter(|| simulate(&state, black_box(flows)).unwrap())
        });
    }
    group.finish();
}

fn sweeps(c: &mut Criterion) {
    let config = ClusterConfig::default();
    for mode in [Mode::Conventional, Mode::Independent] {
        let spec = BenchSpec::new(mode, TierName::Ge, 2);
        c.bench_function(&format!("sweep_{mode}_twin"), |b| {
            b.iter(|| run_sweep(&config, black_box(&spec)).unwrap())
        });
    }
}

pub fn benchmarks(c: &mut Criterion) {
    fair_share(c);
    relay_simulation(c);
    sweeps(c);
}
