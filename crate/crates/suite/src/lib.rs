//! Acceptance criteria for the whole workspace: oracle agreement, graph
//! search, simulator determinism and the policy experiments.

use std::fmt::Write as _;
use std::time::Instant;

use oppcomp::composition::{enumerate_paths, rank_compositions, shortest_composition, CompositionGraph, CompositionPlan, RequestTypes, Vertex};
use oppcomp::rng::{substream, substream2};
use oppcomp::sim::{run, PolicySpec, SimConfig, SimTime};
use oppcomp::trace::{generate_synthetic, ContactInterval, SyntheticSpec};
use oppcomp::{NodeId, ServiceId};
use oppcomp_cli::commands::run_experiment;
use oppcomp_cli::config::ExperimentConfig;
use oppcomp_cli::metrics::{Mode, Summary};
use oppcomp_cli::validate::{run_validation, BiasReport, ClosedForms, GridSpec, Quantity, GATE_SIGMAS};
use rand::Rng;
use rand_distr::{Distribution, Exp};

const ROOT_SEED: u64 = 1;

pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn scenario(policies: Vec<PolicySpec>) -> ExperimentConfig {
    // 30 nodes, contact rate 0.02, inter-contact rate 0.005, 75 s mean
    // execution, 40 KB I/O, seeds 1..=5
    ExperimentConfig { policies, ..ExperimentConfig::default() }
}

fn mean_of(s: &Summary, label: &str) -> f64 {
    s.policy(label).and_then(|p| p.provisioning_time.mean).unwrap_or(f64::NAN)
}

fn oracle_agreement(r: &BiasReport) -> Outcome {
    let mut d = String::new();
    let mut pass = true;
    for q in [Quantity::Wait, Quantity::QueueDelay, Quantity::Theta2B, Quantity::Theta2C, Quantity::BCase3, Quantity::Theta3, Quantity::PmfN2B] {
        let s = r.quantity(q).expect("every quantity is checked");
        pass &= s.outside_gate == 0;
        let _ = write!(
            d,
            "\n      {:?}: {}/{} outside {GATE_SIGMAS}σ (≈{:.1} expected by chance), max |z| {:.2}",
            q, s.outside_gate, s.checks, s.expected_by_chance, s.max_abs_z
        );
        for c in r.checks.iter().filter(|c| c.quantity == q && !c.within_gate).take(3) {
            let _ = write!(d, "\n        point {} n={:?}: closed {:.6} oracle {:.6} ± {:.2e} (z {:.2})", c.point, c.n, c.closed, c.estimate, c.std_error, c.z);
        }
    }
    let head = format!("{} points, {} trials each, root seed {}", r.grid.points, r.grid.trials, r.grid.seed);
    outcome(pass, head + &d)
}

fn probability_sanity(r: &BiasReport) -> Outcome {
    let s = r.sanity;
    let pass = s.max_case_sum_error <= 1e-12 && s.case_probabilities_in_range && s.max_pmf_sum_error <= 1e-9;
    outcome(
        pass,
        format!(
            "{} points: max |p1+p2+p3-1| {:.2e}, all in [0,1]: {}, max |Σ pmf(0..200)-1| {:.2e}",
            s.points, s.max_case_sum_error, s.case_probabilities_in_range, s.max_pmf_sum_error
        ),
    )
}

fn queue_oracle(r: &BiasReport) -> Outcome {
    let pass = r.queue.iter().all(|c| c.within_gate);
    let d: Vec<String> = r.queue.iter().map(|c| format!("ρ#{} closed {:.3} oracle {:.3} (z {:.2})", c.point, c.closed, c.estimate, c.z)).collect();
    outcome(pass, format!("ρ ∈ {{0.1, 0.375, 0.7, 0.9}}, {} served: {}", r.grid.trials, d.join("; ")))
}

fn random_graph(index: u64) -> CompositionGraph {
    let mut rng = substream(ROOT_SEED, "acceptance-graph", index);
    let request = RequestTypes::new(0, 5).unwrap();
    let mut services: Vec<(ServiceId, NodeId)> = (0..rng.random_range(1..=10))
        .map(|_| {
            let i = rng.random_range(0..5u8);
            let o = rng.random_range(i + 1..=5u8);
            (ServiceId::new(i, o).unwrap(), NodeId(rng.random_range(1..4)))
        })
        .collect();
    services.sort();
    services.dedup();
    let mut weight = || match rng.random_range(0..3) {
        0 => f64::from(rng.random_range(0..6u32)),
        1 if rng.random_bool(0.3) => f64::INFINITY,
        _ => rng.random_range(0.0..10.0),
    };
    let mut edges = Vec::new();
    for &(s, p) in &services {
        let v = Vertex::Service { service: s, provider: p };
        if s.input() == 0 {
            edges.push((Vertex::Start, v, weight()));
        }
        if s.output() == 5 {
            edges.push((v, Vertex::End, weight()));
        }
        for &(t, q) in &services {
            if t.input() == s.output() {
                edges.push((v, Vertex::Service { service: t, provider: q }, weight()));
            }
        }
    }
    CompositionGraph::from_parts(NodeId(0), request, &services, &edges).unwrap()
}

fn graph_oracle() -> Outcome {
    let (mut mismatches, mut feasible, mut max_vertices) = (0, 0, 0);
    for g in (0..1000).map(random_graph) {
        max_vertices = max_vertices.max(g.vertices().len());
        let mut brute: Vec<CompositionPlan> = enumerate_paths(&g).into_iter().filter(|p| p.estimated_total.is_finite()).collect();
        brute.sort_by(|a, b| a.estimated_total.total_cmp(&b.estimated_total).then_with(|| a.legs.cmp(&b.legs)));
        brute.truncate(3);
        feasible += usize::from(!brute.is_empty());
        let best_ok = match shortest_composition(&g) {
            Ok(p) => brute.first() == Some(&p),
            Err(_) => brute.is_empty(),
        };
        let rank_ok = match rank_compositions(&g, 3) {
            Ok(r) => r.plans == brute,
            Err(_) => brute.is_empty(),
        };
        mismatches += usize::from(!(best_ok && rank_ok));
    }
    outcome(mismatches == 0, format!("1000 graphs (≤{max_vertices} vertices, {feasible} feasible): {mismatches} mismatches"))
}

fn determinism() -> Outcome {
    let cfg = SimConfig { duration: 40_000.0, ..SimConfig::default() };
    let trace = generate_synthetic(&SyntheticSpec { n_nodes: cfg.n_nodes, delta: 0.02, delta_prime: 0.005, duration: cfg.duration, seed: ROOT_SEED }).unwrap();
    let (mut distinct, mut bad_sums, mut records) = (0, 0, 0);
    for p in [PolicySpec::Mev, PolicySpec::Afir, PolicySpec::Ran, PolicySpec::Ato] {
        let first = run(&cfg, &trace, p, ROOT_SEED).unwrap();
        for r in &first.records {
            records += 1;
            if let Some(ph) = r.phases() {
                bad_sums += usize::from(Some(ph.total()) != r.provisioning_time());
            }
        }
        for _ in 1..10 {
            let again = run(&cfg, &trace, p, ROOT_SEED).unwrap();
            distinct += usize::from(again.digest != first.digest || again.records != first.records);
        }
    }
    outcome(
        distinct == 0 && bad_sums == 0,
        format!("4 policies × 10 runs: {distinct} differing repeats; {records} records, {bad_sums} with phase sum ≠ completion − generation"),
    )
}

fn degenerate() -> Outcome {
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
    // one contact and one gap during warm-up give the seeker link
    // statistics; afterwards the pair never separates
    let trace = [
        ContactInterval { a: NodeId(0), b: NodeId(1), start: 0.0, end: 10.0 },
        ContactInterval { a: NodeId(0), b: NodeId(1), start: 20.0, end: cfg.duration },
    ];
    let transfer = SimTime::from_secs_ceil(cfg.io_bytes / cfg.capacity);
    let exp = Exp::new(1.0 / cfg.exec_mean).unwrap();
    let (mut checked, mut off, mut worst) = (0, 0, 0u64);
    for p in [PolicySpec::Mev, PolicySpec::MevRank(2), PolicySpec::Afir, PolicySpec::Ran, PolicySpec::Ato] {
        let out = run(&cfg, &trace, p, ROOT_SEED).unwrap();
        for r in out.records.iter().filter(|r| r.is_complete()) {
            let ds = SimTime::from_secs_ceil(exp.sample(&mut substream2(ROOT_SEED, "exec", r.id, 0)));
            let diff = r.provisioning_time().unwrap().0.abs_diff((transfer + ds + transfer).0);
            checked += 1;
            worst = worst.max(diff);
            off += usize::from(diff > 1);
        }
    }
    outcome(checked > 1000 && off == 0, format!("{checked} requests over 5 policies: {off} off by more than 1 µs (worst {worst} µs)"))
}

fn ordering(s: &Summary) -> Outcome {
    let [mev, afir, ran, ato] = ["MEV", "AFIR", "RAN", "ATO"].map(|l| s.policy(l).expect("compared").provisioning_time);
    let m = |i: oppcomp_cli::metrics::Interval| i.mean.unwrap_or(f64::NAN);
    let ordered = m(mev) < m(afir) && m(afir) < m(ato) && m(ato) < m(ran);
    let separated = mev.disjoint(&ran) && mev.disjoint(&ato);
    let ci = |i: oppcomp_cli::metrics::Interval| format!("{:.1} ± {:.1}", m(i), i.half_width.unwrap_or(f64::NAN));
    outcome(
        ordered && separated && m(mev) <= m(afir),
        format!(
            "MEV {} AFIR {} ATO {} RAN {} (s); MEV faster than AFIR by {:.1}%; CI(MEV) disjoint from RAN: {}, from ATO: {}",
            ci(mev),
            ci(afir),
            ci(ato),
            ci(ran),
            100.0 * (m(afir) - m(mev)) / m(afir),
            mev.disjoint(&ran),
            mev.disjoint(&ato)
        ),
    )
}

fn pct_best(s: &Summary) -> Outcome {
    let c = s.comparison.as_ref().expect("compare mode");
    let mev = c.policies.iter().find(|p| p.policy == "MEV").expect("MEV compared");
    let lowest = c.policies.iter().all(|p| p.policy == "MEV" || p.mean_loss > mev.mean_loss);
    let d: Vec<String> = c.policies.iter().map(|p| format!("{} best {:.1}% loss {:.1}s", p.policy, p.pct_best, p.mean_loss)).collect();
    let oracle = c.oracle_best.as_ref().map_or(String::new(), |o| {
        format!("; ORACLE_BEST(AFIR,RAN,ATO) loss {:.1}s, {:+.1}s vs MEV", o.mean_loss, o.mean_gap_vs_mev)
    });
    outcome(mev.pct_best >= 45.0 && lowest, format!("{} aligned requests ({} excluded pending): {}{oracle}", c.aligned, c.excluded_pending, d.join(", ")))
}

fn rank_monotonicity(s: &Summary) -> Outcome {
    let r = s.ranking.as_ref().expect("rank mode");
    let f: Vec<f64> = r.positions.iter().map(|p| p.fraction_fastest).collect();
    let inversions = f.windows(2).filter(|w| w[1] > w[0]).count();
    let d: Vec<String> = r.positions.iter().map(|p| format!("#{} {:.3}", p.rank, p.fraction_fastest)).collect();
    outcome(
        f.len() == 5 && f[0] > 0.2 && inversions <= 1,
        format!("{} requests: {}; {inversions} adjacent inversions", r.cohort, d.join(" ")),
    )
}

fn model_accuracy(s: &Summary) -> Outcome {
    match s.policy("MEV").and_then(|p| p.estimate) {
        Some(e) => outcome(
            e.relative_error <= 0.25,
            format!("{} requests: estimated {:.1}s vs simulated {:.1}s, error {:.1}%", e.requests, e.mean_estimate, e.mean_simulated, 100.0 * e.relative_error),
        ),
        None => outcome(false, "no MEV estimates".into()),
    }
}

fn stress() -> Outcome {
    let gap = |io: f64, cpu: u32| {
        let cfg = ExperimentConfig { io_size_bytes: io, cpu_max: cpu, ..scenario(vec![PolicySpec::Mev, PolicySpec::Afir]) };
        let s = run_experiment(Mode::Simulate, &cfg).expect("simulation").summary;
        mean_of(&s, "AFIR") - mean_of(&s, "MEV")
    };
    let base = gap(40e3, 0);
    let io = [base, gap(320e3, 0), gap(1280e3, 0)];
    let cpu = [base, gap(40e3, 3), gap(40e3, 10)];
    let increasing = |g: &[f64; 3]| g[0] < g[1] && g[1] < g[2];
    outcome(
        increasing(&io) && increasing(&cpu),
        format!(
            "AFIR − MEV at io 40/320/1280 KB: {:.1} {:.1} {:.1} s; at cpu 0/3/10: {:.1} {:.1} {:.1} s",
            io[0], io[1], io[2], cpu[0], cpu[1], cpu[2]
        ),
    )
}

/// Runs every criterion, printing one PASS/FAIL line each. Returns whether
/// all passed.
pub fn run_acceptance() -> bool {
    let started = Instant::now();
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut report = |n: usize, name: &'static str, o: Outcome, t: Instant| {
        println!("[{}] {n:>2} {name}: {} ({:.0}s)", if o.pass { "PASS" } else { "FAIL" }, o.detail, t.elapsed().as_secs_f64());
        results.push((n, name, o));
    };

    let t = Instant::now();
    let bias = run_validation(&GridSpec { seed: ROOT_SEED, ..GridSpec::default() }, &ClosedForms::default());
    report(1, "closed-form/oracle agreement", oracle_agreement(&bias), t);
    report(2, "probability sanity", probability_sanity(&bias), t);
    report(3, "queue oracle", queue_oracle(&bias), t);
    let t = Instant::now();
    report(4, "graph oracle", graph_oracle(), t);
    let t = Instant::now();
    report(5, "simulator determinism", determinism(), t);
    let t = Instant::now();
    report(6, "degenerate end-to-end", degenerate(), t);

    let t = Instant::now();
    let compare = run_experiment(Mode::Compare, &scenario(vec![PolicySpec::Mev, PolicySpec::Afir, PolicySpec::Ran, PolicySpec::Ato]))
        .expect("compare run")
        .summary;
    report(7, "policy ordering", ordering(&compare), t);
    report(8, "pct-best", pct_best(&compare), t);
    report(10, "model vs simulation", model_accuracy(&compare), t);
    let t = Instant::now();
    let ranked = run_experiment(Mode::RankEval, &ExperimentConfig { top_k: 5, ..scenario(vec![PolicySpec::Mev]) }).expect("rank run").summary;
    report(9, "rank monotonicity", rank_monotonicity(&ranked), t);
    let t = Instant::now();
    report(11, "resource-stress trend", stress(), t);

    results.sort_by_key(|r| r.0);
    let failed: Vec<String> = results.iter().filter(|r| !r.2.pass).map(|r| format!("{} {}", r.0, r.1)).collect();
    println!("{}/{} criteria passed in {:.0}s", results.len() - failed.len(), results.len(), started.elapsed().as_secs_f64());
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
    }
    failed.is_empty()
}
