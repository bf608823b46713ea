//! Test-only oracles, kept independent of the simulator's own solver and
//! event loop. Shared with the acceptance suite via `#[path]`.
#![allow(dead_code)]

use std::collections::BTreeSet;

use multiblock_core::netsim::{route_flow, Flow, LinkId};
use multiblock_core::ClusterState;

/// Max-min rates by raising a common water level. Each round recomputes,
/// from scratch, the level at which some link fills given the flows already
/// frozen, then freezes every flow on every link that fills at that level.
pub fn water_fill(paths: &[Vec<LinkId>], capacity: impl Fn(&LinkId) -> f64) -> Vec<f64> {
    let links: BTreeSet<LinkId> = paths.iter().flatten().copied().collect();
    let mut rate: Vec<Option<f64>> = vec![None; paths.len()];
    while rate.iter().any(Option::is_none) {
        let mut level = f64::INFINITY;
        for l in &links {
            let users: Vec<usize> = (0..paths.len()).filter(|&i| paths[i].contains(l)).collect();
            let frozen: f64 = users.iter().filter_map(|&i| rate[i]).sum();
            let open = users.iter().filter(|&&i| rate[i].is_none()).count();
            if open > 0 {
                level = level.min((capacity(l) - frozen) / open as f64);
            }
        }
        let mut froze_any = false;
        for l in &links {
            let users: Vec<usize> = (0..paths.len()).filter(|&i| paths[i].contains(l)).collect();
            let frozen: f64 = users.iter().filter_map(|&i| rate[i]).sum();
            let open = users.iter().filter(|&&i| rate[i].is_none()).count();
            if open > 0 && (capacity(l) - frozen) / open as f64 <= level * (1.0 + 1e-12) {
                for &i in &users {
                    if rate[i].is_none() {
                        rate[i] = Some(level);
                        froze_any = true;
                    }
                }
            }
        }
        assert!(froze_any);
    }
    rate.into_iter().map(Option::unwrap).collect()
}

/// Fixed-step fluid integration of the same flows with step `dt_us`.
/// Returns each flow's completion time, `None` for unreliable sizes.
/// Starts are taken at the first step boundary at or after the start time.
pub fn fluid_completions(state: &ClusterState, flows: &[Flow], dt_us: f64) -> Vec<Option<f64>> {
    let paths: Vec<_> = flows
        .iter()
        .map(|f| route_flow(state, f).expect("routable"))
        .collect();
    let tiers: Vec<_> = paths
        .iter()
        .map(|p| state.channel(p.channel).tier)
        .collect();
    let mut left: Vec<f64> = flows.iter().map(|f| f.size_bytes as f64 * 8.0).collect();
    let mut done: Vec<Option<f64>> = vec![None; flows.len()];
    let live: Vec<bool> = flows
        .iter()
        .zip(&tiers)
        .map(|(f, t)| f.size_bytes <= t.max_reliable_bytes)
        .collect();
    for i in 0..flows.len() {
        if live[i] && flows[i].size_bytes == 0 {
            done[i] = Some(flows[i].start_us);
        }
    }

    let mut cached: Option<(Vec<usize>, Vec<f64>)> = None;
    let mut step = 0u64;
    while (0..flows.len()).any(|i| live[i] && done[i].is_none()) {
        let t0 = step as f64 * dt_us;
        let active: Vec<usize> = (0..flows.len())
            .filter(|&i| live[i] && done[i].is_none() && flows[i].start_us <= t0)
            .collect();
        if !active.is_empty() {
            if cached.as_ref().map(|(a, _)| a != &active).unwrap_or(true) {
                let ps: Vec<Vec<LinkId>> = active.iter().map(|&i| paths[i].links.clone()).collect();
                let rates = water_fill(&ps, |l| {
                    let kind = l.channel;
                    state.channel(kind).tier.bandwidth()
                });
                cached = Some((active.clone(), rates));
            }
            let rates = &cached.as_ref().unwrap().1;
            for (k, &i) in active.iter().enumerate() {
                let bits = rates[k] * dt_us / 1e6;
                if bits >= left[i] {
                    done[i] = Some(t0 + left[i] / rates[k] * 1e6);
                    left[i] = 0.0;
                } else {
                    left[i] -= bits;
                }
            }
        }
        step += 1;
    }

    (0..flows.len())
        .map(|i| {
            done[i]
                .filter(|_| live[i])
                .map(|drain| drain + f64::from(paths[i].hop_count) * tiers[i].latency_us)
        })
        .collect()
}
