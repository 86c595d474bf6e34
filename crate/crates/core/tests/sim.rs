use std::collections::BTreeMap;

use oppcomp::composition::RequestTypes;
use oppcomp::rng::substream2;
use oppcomp::sim::*;
use oppcomp::trace::{generate_synthetic, ContactInterval, SyntheticSpec};
use oppcomp::{NodeId, ServiceId};
use rand_distr::{Distribution, Exp};

const ALL: [PolicySpec; 5] = [PolicySpec::Mev, PolicySpec::MevRank(2), PolicySpec::Afir, PolicySpec::Ran, PolicySpec::Ato];

fn small() -> (SimConfig, Vec<ContactInterval>) {
    let cfg = SimConfig { n_nodes: 10, duration: 12_000.0, warmup: 4_000.0, cpu_max: 3, density: 0.3, log_transfers: true, ..SimConfig::default() };
    let trace = generate_synthetic(&SyntheticSpec { n_nodes: 10, delta: 0.02, delta_prime: 0.005, duration: cfg.duration, seed: 11 }).unwrap();
    (cfg, trace)
}

#[test]
fn zero_duration_gives_no_records() {
    let cfg = SimConfig { duration: 0.0, warmup: 0.0, ..SimConfig::default() };
    let out = run(&cfg, &[], PolicySpec::Mev, 1).unwrap();
    assert!(out.records.is_empty());
    assert_eq!(out.events, 0);
}

#[test]
fn malformed_input_is_rejected_before_start() {
    let cfg = SimConfig { n_nodes: 3, ..SimConfig::default() };
    let bad = [ContactInterval { a: NodeId(0), b: NodeId(7), start: 0.0, end: 1.0 }];
    assert!(matches!(run(&cfg, &bad, PolicySpec::Mev, 1), Err(SimError::Trace(_))));
    let cfg = SimConfig { warmup: 1e9, ..cfg };
    assert!(matches!(run(&cfg, &[], PolicySpec::Mev, 1), Err(SimError::Config { field: "warmup", .. })));
}

#[test]
fn digest_depends_only_on_inputs() {
    let (cfg, trace) = small();
    for p in ALL {
        let a = run(&cfg, &trace, p, 5).unwrap();
        let b = run(&cfg, &trace, p, 5).unwrap();
        assert_eq!(a.digest, b.digest, "{p}");
        assert_eq!(a.records, b.records, "{p}");
        let c = run(&cfg, &trace, p, 6).unwrap();
        assert_ne!(a.digest, c.digest, "{p}");
    }
}

#[test]
fn phases_telescope_and_requests_are_conserved() {
    let (cfg, trace) = small();
    for p in ALL {
        let out = run(&cfg, &trace, p, 3).unwrap();
        assert!(out.records.len() > 100);
        let done = out.records.iter().filter(|r| r.is_complete()).count();
        assert!(done * 2 >= out.records.len(), "{p}: {done}/{}", out.records.len());
        for r in &out.records {
            assert!(r.gen_time.secs() >= cfg.warmup && r.gen_time.secs() < cfg.duration);
            match r.phases() {
                Some(ph) => {
                    assert_eq!(ph.total(), r.provisioning_time().unwrap(), "{p} request {}", r.id);
                    let legs: Vec<_> = r.legs.iter().map(|l| (l.service, l.provider)).collect();
                    assert!(oppcomp::composition::legs_chain(&legs, r.request), "{p}: {}", r.plan());
                    assert!(r.legs.iter().all(|l| l.provider != r.seeker));
                    let c = r.completion_time.unwrap();
                    assert!(c.secs() <= cfg.duration);
                }
                None => assert!(r.completion_time.is_none()),
            }
            if p == PolicySpec::Ato && r.commit_time.is_some() {
                assert_eq!(r.legs.len(), 1);
            }
        }
    }
}

fn contact_windows(trace: &[ContactInterval]) -> BTreeMap<(NodeId, NodeId), Vec<(SimTime, SimTime)>> {
    let mut m: BTreeMap<_, Vec<_>> = BTreeMap::new();
    for c in trace {
        m.entry((c.a, c.b)).or_default().push((SimTime::from_secs_ceil(c.start), SimTime::from_secs_ceil(c.end)));
    }
    m
}

#[test]
fn transfers_progress_only_in_contact_and_within_capacity() {
    let (cfg, trace) = small();
    let windows = contact_windows(&trace);
    for p in [PolicySpec::Mev, PolicySpec::Afir, PolicySpec::Ran] {
        let out = run(&cfg, &trace, p, 8).unwrap();
        assert!(!out.transfer_log.is_empty());
        let mut load: BTreeMap<(SimTime, NodeId), f64> = BTreeMap::new();
        for s in &out.transfer_log {
            let w = &windows[&(s.src.min(s.dst), s.src.max(s.dst))];
            assert!(w.iter().any(|&(a, b)| a <= s.start && s.end <= b), "{p}: {s:?} outside contact");
            assert!(s.rate > 0.0 && s.rate <= cfg.capacity);
            *load.entry((s.start, s.src)).or_default() += s.rate;
            *load.entry((s.start, s.dst)).or_default() += s.rate;
        }
        for ((t, n), total) in load {
            assert!(total <= cfg.capacity * (1.0 + 1e-12), "{p}: node {n} at {t} uses {total}");
        }
    }
}

#[test]
fn providers_execute_in_arrival_order() {
    let (cfg, trace) = small();
    for p in ALL {
        let out = run(&cfg, &trace, p, 2).unwrap();
        let mut last: BTreeMap<NodeId, SimTime> = BTreeMap::new();
        let mut seen = std::collections::BTreeSet::new();
        for e in &out.exec_log {
            assert!(seen.insert((e.request, e.leg)));
            assert!(e.arrive <= e.start);
            let prev = last.insert(e.provider, e.arrive).unwrap_or(SimTime::ZERO);
            assert!(prev <= e.arrive, "{p}: FIFO broken at {}", e.provider);
        }
    }
}

/// Two nodes that keep in contact once the warm-up has produced link
/// statistics, one service at the peer and no contention.
fn degenerate(policy: PolicySpec) {
    let service = ServiceId::new(0, 8).unwrap();
    let cfg = SimConfig {
        n_nodes: 2,
        duration: 20_000.0,
        warmup: 100.0,
        exec_mean: 5.0,
        cpu_max: 0,
        placement: Some(vec![(NodeId(1), service)]),
        request_types: Some(vec![RequestTypes::new(0, 8).unwrap()]),
        seekers: Some(vec![NodeId(0)]),
        ..SimConfig::default()
    };
    let trace = [
        ContactInterval { a: NodeId(0), b: NodeId(1), start: 0.0, end: 10.0 },
        ContactInterval { a: NodeId(0), b: NodeId(1), start: 20.0, end: 20_000.0 },
    ];
    let seed = 4;
    let out = run(&cfg, &trace, policy, seed).unwrap();
    assert!(out.records.len() > 200);
    let transfer = SimTime::from_secs_ceil(cfg.io_bytes / cfg.capacity);
    let exp = Exp::new(1.0 / cfg.exec_mean).unwrap();
    for r in out.records.iter().filter(|r| r.is_complete()) {
        let draw = exp.sample(&mut substream2(seed, "exec", r.id, 0));
        let ds = SimTime::from_secs_ceil(draw);
        let expected = transfer + ds + transfer;
        let got = r.provisioning_time().unwrap();
        assert!(got.0.abs_diff(expected.0) <= 1, "{policy} request {}: {got} vs {expected}", r.id);
    }
}

#[test]
fn permanent_contact_is_transfer_plus_execution() {
    for p in ALL {
        degenerate(p);
    }
}

#[test]
fn common_random_numbers_align_requests_across_policies() {
    let (cfg, trace) = small();
    let base: Vec<_> = run(&cfg, &trace, PolicySpec::Mev, 9).unwrap().records.iter().map(|r| (r.id, r.seeker, r.request, r.gen_time)).collect();
    for p in ALL {
        let other: Vec<_> = run(&cfg, &trace, p, 9).unwrap().records.iter().map(|r| (r.id, r.seeker, r.request, r.gen_time)).collect();
        assert_eq!(base, other, "{p}");
    }
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]
        #[test]
        fn invariants_hold_on_random_scenarios(
            n in 3u32..8,
            density in 0.2..0.8f64,
            io in 1_000.0..2_000_000.0f64,
            cpu in 0u32..6,
            policy in 0usize..5,
            seed in any::<u64>(),
        ) {
            let cfg = SimConfig { n_nodes: n, duration: 6_000.0, warmup: 2_000.0, io_bytes: io, cpu_max: cpu, density, log_transfers: true, ..SimConfig::default() };
            let trace = generate_synthetic(&SyntheticSpec { n_nodes: n, delta: 0.02, delta_prime: 0.005, duration: cfg.duration, seed }).unwrap();
            let out = run(&cfg, &trace, ALL[policy], seed).unwrap();
            for r in &out.records {
                if let Some(ph) = r.phases() {
                    prop_assert_eq!(ph.total(), r.provisioning_time().unwrap());
                }
            }
            let windows = contact_windows(&trace);
            let mut load: BTreeMap<(SimTime, NodeId), f64> = BTreeMap::new();
            for s in &out.transfer_log {
                let w = &windows[&(s.src.min(s.dst), s.src.max(s.dst))];
                prop_assert!(w.iter().any(|&(a, b)| a <= s.start && s.end <= b));
                *load.entry((s.start, s.src)).or_default() += s.rate;
                *load.entry((s.start, s.dst)).or_default() += s.rate;
            }
            prop_assert!(load.values().all(|&l| l <= cfg.capacity * (1.0 + 1e-12)));
            prop_assert_eq!(run(&cfg, &trace, ALL[policy], seed).unwrap().digest, out.digest);
        }
    }
}
