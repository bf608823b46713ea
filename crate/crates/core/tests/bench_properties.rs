use multiblock_core::bench::{compare, power_ladder, run_sweep, BenchSample, BenchSpec};
use multiblock_core::netsim::FlowStatus;
use multiblock_core::{ClusterConfig, Mode, TierName};

fn sweep(mode: Mode, tier: TierName, blocks: usize, sizes: Vec<u64>) -> Vec<BenchSample> {
    let spec = BenchSpec::new(mode, tier, blocks).with_sizes(sizes);
    run_sweep(&ClusterConfig::default(), &spec).unwrap()
}

fn rtt_at(samples: &[BenchSample], size: u64) -> f64 {
    samples
        .iter()
        .find(|s| s.size_bytes == size)
        .and_then(|s| s.rtt_us)
        .unwrap()
}

#[test]
fn gigabit_dominates_fast_ethernet() {
    let ladder = power_ladder(1 << 10, 1 << 25);
    for mode in [Mode::Conventional, Mode::Independent] {
        let fe = sweep(mode, TierName::Fe, 1, ladder.clone());
        let ge = sweep(mode, TierName::Ge, 1, ladder.clone());
        for &size in &ladder {
            assert!(rtt_at(&ge, size) < rtt_at(&fe, size), "{mode} at {size}");
        }
        let ratio = rtt_at(&fe, 1 << 23) / rtt_at(&ge, 1 << 23);
        assert!((ratio - 10.0).abs() <= 0.5, "{mode}: {ratio}");
    }
}

#[test]
fn independent_twin_equals_single_bitwise() {
    for tier in [TierName::Fe, TierName::Ge] {
        let single = sweep(Mode::Independent, tier, 1, power_ladder(1 << 10, 1 << 30));
        let twin = sweep(Mode::Independent, tier, 2, power_ladder(1 << 10, 1 << 30));
        for t in &twin {
            let s = single
                .iter()
                .find(|s| s.size_bytes == t.size_bytes && s.flow == t.flow)
                .unwrap();
            assert_eq!(t.status, s.status);
            assert_eq!(t.rtt_us.map(f64::to_bits), s.rtt_us.map(f64::to_bits));
        }
        assert!(compare(&single, &twin)
            .unwrap()
            .rows
            .iter()
            .all(|r| r.ratio.is_none_or(|x| x == 1.0)));
    }
}

#[test]
fn conventional_twin_roughly_doubles() {
    for tier in [TierName::Fe, TierName::Ge] {
        let ladder = power_ladder(1 << 10, 1 << 30);
        let single = sweep(Mode::Conventional, tier, 1, ladder.clone());
        let twin = sweep(Mode::Conventional, tier, 2, ladder);
        let report = compare(&single, &twin).unwrap();
        for row in &report.rows {
            if let Some(r) = row.ratio {
                assert!(r > 1.0 && r < 2.0, "{tier} {}: {r}", row.size_bytes);
                if row.size_bytes >= 1 << 20 {
                    assert!((1.9..=2.0).contains(&r), "{tier} {}: {r}", row.size_bytes);
                }
            }
        }
    }
}

#[test]
fn round_trip_is_two_phases() {
    // forward and reverse run on mirrored links with identical arithmetic
    for mode in [Mode::Conventional, Mode::Independent] {
        for blocks in [1, 2] {
            let spec = BenchSpec::new(mode, TierName::Ge, blocks).with_sizes(vec![1 << 16]);
            let (state, bs) = spec.prepare(&ClusterConfig::default()).unwrap();
            let samples = multiblock_core::bench::sweep(&state, &bs, &spec).unwrap();
            let m: Vec<_> = bs.iter().map(|b| b.members(mode)).collect();
            let flows: Vec<_> = m
                .iter()
                .flat_map(|m| (0..2).map(move |i| (m[i], m[2 + i])))
                .enumerate()
                .map(|(i, (a, b))| multiblock_core::Flow::new(i as u64, a, b, 1 << 16))
                .collect();
            let phase = multiblock_core::simulate(&state, &flows).unwrap();
            for (s, o) in samples.iter().zip(&phase) {
                assert_eq!(s.rtt_us.unwrap(), 2.0 * o.completion_us.unwrap());
            }
        }
    }
}

#[test]
fn reliability_cutoffs() {
    let fe = sweep(
        Mode::Independent,
        TierName::Fe,
        1,
        power_ladder(1 << 10, 1 << 30),
    );
    for s in &fe {
        let ok = s.size_bytes <= 1 << 25;
        assert_eq!(s.status == FlowStatus::Completed, ok, "{}", s.size_bytes);
    }
    let ge = sweep(
        Mode::Independent,
        TierName::Ge,
        2,
        power_ladder(1 << 10, 1 << 30),
    );
    assert!(ge.iter().all(|s| s.status == FlowStatus::Completed));
}
