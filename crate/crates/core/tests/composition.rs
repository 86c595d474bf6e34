use oppcomp::composition::*;
use oppcomp::knowledge::{ContactKind, KnowledgeBase, LoadStats, ServiceAdvert};
use oppcomp::model::{expected_queue_delay, ProviderParams};
use oppcomp::{NodeId, ServiceId};
use proptest::prelude::*;

fn s(i: u8, o: u8) -> ServiceId {
    ServiceId::new(i, o).unwrap()
}

fn req(i: u8, o: u8) -> RequestTypes {
    RequestTypes::new(i, o).unwrap()
}

const ME: NodeId = NodeId(0);

/// A peer met once for `contact` seconds, then apart for `gap` seconds,
/// and currently in contact again.
fn meet(kb: &mut KnowledgeBase, p: NodeId, contact: f64, gap: f64) {
    kb.record_contact_event(p, ContactKind::Up, 1.0).unwrap();
    kb.record_contact_event(p, ContactKind::Down, 1.0 + contact).unwrap();
    kb.record_contact_event(p, ContactKind::Up, 1.0 + contact + gap).unwrap();
}

fn advertise(kb: &mut KnowledgeBase, p: NodeId, services: &[ServiceId], lambda: f64) {
    let ads: Vec<_> = services.iter().map(|&service_id| ServiceAdvert { service_id, d: 75.0, d2: 11250.0 }).collect();
    kb.merge_peer_advertisement(p, &ads, LoadStats { lambda, l: 1.0, l2: 1.0 }).unwrap();
}

fn model() -> WeightModel {
    WeightModel { input_bytes: 40_000.0, output_bytes: 40_000.0, default_throughput: 100_000.0 }
}

fn start_end(cg: &CompositionGraph) -> (Vec<f64>, Vec<f64>) {
    let starts = cg.edges().filter(|e| e.0 == Vertex::Start).map(|e| e.2).collect();
    let ends = cg.edges().filter(|e| e.1 == Vertex::End).map(|e| e.2).collect();
    (starts, ends)
}

#[test]
fn single_provider_without_disconnections() {
    let mut kb = KnowledgeBase::new(ME);
    meet(&mut kb, NodeId(1), 1e12, 200.0);
    advertise(&mut kb, NodeId(1), &[s(0, 8)], 0.0);
    let sg = build_service_graph(&kb, req(0, 8)).unwrap();
    let cg = build_composition_graph(&sg, &kb, &model()).unwrap();
    let (starts, ends) = start_end(&cg);
    let dq = expected_queue_delay(&ProviderParams::new(0.0, 1.0, 0.0, 75.0, 11250.0).unwrap()).unwrap();
    assert_eq!(starts.len(), 1);
    assert!((starts[0] - (0.4 + dq + 75.0)).abs() < 1e-6, "{starts:?}");
    assert!((ends[0] - 0.4).abs() < 1e-6, "{ends:?}");
}

#[test]
fn overloaded_provider_is_avoided() {
    let mut kb = KnowledgeBase::new(ME);
    meet(&mut kb, NodeId(1), 50.0, 200.0);
    meet(&mut kb, NodeId(2), 50.0, 200.0);
    advertise(&mut kb, NodeId(1), &[s(0, 8)], 1.0);
    advertise(&mut kb, NodeId(2), &[s(0, 8)], 0.001);
    let sg = build_service_graph(&kb, req(0, 8)).unwrap();
    let cg = build_composition_graph(&sg, &kb, &model()).unwrap();
    let hot = Vertex::Service { service: s(0, 8), provider: NodeId(1) };
    assert!(cg.edges().filter(|e| e.1 == hot).all(|e| e.2 == f64::INFINITY));
    let plan = shortest_composition(&cg).unwrap();
    assert_eq!(plan.legs, vec![(s(0, 8), NodeId(2))]);
}

#[test]
fn identical_providers_get_identical_weights() {
    let mut kb = KnowledgeBase::new(ME);
    for p in [NodeId(3), NodeId(4)] {
        meet(&mut kb, p, 50.0, 200.0);
        advertise(&mut kb, p, &[s(0, 8)], 0.002);
    }
    let cg = build_composition_graph(&build_service_graph(&kb, req(0, 8)).unwrap(), &kb, &model()).unwrap();
    let (starts, ends) = start_end(&cg);
    assert!((starts[0] - starts[1]).abs() <= 1e-12 && (ends[0] - ends[1]).abs() <= 1e-12);
    // Equal totals: the lower provider id wins.
    assert_eq!(shortest_composition(&cg).unwrap().legs, vec![(s(0, 8), NodeId(3))]);
}

#[test]
fn unusable_and_own_services_are_excluded() {
    let mut kb = KnowledgeBase::new(ME);
    kb.record_contact_event(NodeId(1), ContactKind::Up, 1.0).unwrap();
    advertise(&mut kb, NodeId(1), &[s(0, 8)], 0.0);
    let sg = build_service_graph(&kb, req(0, 8)).unwrap();
    assert_eq!(build_composition_graph(&sg, &kb, &model()), Err(CompositionError::NoCandidate));
}

#[test]
fn single_path_weight_equals_single_estimate() {
    use oppcomp::model::{estimate_single, LinkParams, TransferSizes};
    let mut kb = KnowledgeBase::new(ME);
    meet(&mut kb, NodeId(1), 50.0, 200.0);
    advertise(&mut kb, NodeId(1), &[s(0, 8)], 0.002);
    let cg = build_composition_graph(&build_service_graph(&kb, req(0, 8)).unwrap(), &kb, &model()).unwrap();
    let plan = shortest_composition(&cg).unwrap();
    let e = estimate_single(
        &LinkParams::new(0.02, 0.005, 100_000.0).unwrap(),
        &ProviderParams::new(0.002, 1.0, 0.0, 75.0, 11250.0).unwrap(),
        &TransferSizes::new(40_000.0, 40_000.0).unwrap(),
        true,
    );
    assert_eq!(plan.estimated_total.to_bits(), e.total.to_bits());
}

#[test]
fn construction_is_deterministic() {
    let mut kb = KnowledgeBase::new(ME);
    for p in 1..6 {
        meet(&mut kb, NodeId(p), 30.0 + p as f64, 150.0 * p as f64);
        advertise(&mut kb, NodeId(p), &[s(0, 2), s(2, 8), s(0, 8), s(2, 5), s(5, 8)], 0.001 * p as f64);
    }
    let sg = build_service_graph(&kb, req(0, 8)).unwrap();
    let a = build_composition_graph(&sg, &kb, &model()).unwrap();
    let b = build_composition_graph(&sg, &kb.clone(), &model()).unwrap();
    let bits = |g: &CompositionGraph| g.edges().map(|e| (e.0, e.1, e.2.to_bits())).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    assert!(a.to_dot().starts_with("digraph"));
    for plan in enumerate_paths(&a) {
        assert!(plan.satisfies_chaining(req(0, 8)));
        assert_eq!(a.path_weight(&plan.legs), Some(plan.estimated_total));
    }
    // 5 direct, 25 two-leg and 125 three-leg alternatives.
    assert_eq!(count_paths(&a), 155);
}

fn hand_graph(single: f64, split: [f64; 3]) -> CompositionGraph {
    let a = Vertex::Service { service: s(0, 8), provider: NodeId(1) };
    let b = Vertex::Service { service: s(0, 2), provider: NodeId(2) };
    let c = Vertex::Service { service: s(2, 8), provider: NodeId(3) };
    CompositionGraph::from_parts(
        ME,
        req(0, 8),
        &[(s(0, 8), NodeId(1)), (s(0, 2), NodeId(2)), (s(2, 8), NodeId(3))],
        &[
            (Vertex::Start, a, single / 2.0),
            (a, Vertex::End, single / 2.0),
            (Vertex::Start, b, split[0]),
            (b, c, split[1]),
            (c, Vertex::End, split[2]),
        ],
    )
    .unwrap()
}

#[test]
fn hand_weighted_examples() {
    let g = hand_graph(100.0, [30.0, 30.0, 30.0]);
    let p = shortest_composition(&g).unwrap();
    assert_eq!(p.legs.len(), 2);
    assert_eq!(p.estimated_total, 90.0);

    let g = hand_graph(30.0, [5.0, 5.0, 5.0]);
    let p = shortest_composition(&g).unwrap();
    assert_eq!((p.legs.len(), p.estimated_total), (2, 15.0));

    let tie = hand_graph(15.0, [5.0, 5.0, 5.0]);
    assert_eq!(shortest_composition(&tie).unwrap().legs, vec![(s(0, 2), NodeId(2)), (s(2, 8), NodeId(3))]);

    let r = rank_compositions(&g, 5).unwrap();
    assert!(r.truncated);
    assert_eq!(r.plans.len(), 2);
    assert!(r.plans.windows(2).all(|w| w[0].estimated_total <= w[1].estimated_total));
    assert_eq!(rank_compositions(&g, 1).unwrap().plans[0], shortest_composition(&g).unwrap());
    assert_eq!(rank_compositions(&g, 0), Err(CompositionError::ZeroTopK));

    let dead = hand_graph(f64::INFINITY, [f64::INFINITY, 1.0, 1.0]);
    assert_eq!(shortest_composition(&dead), Err(CompositionError::NoFeasibleComposition));
}

#[test]
fn from_parts_rejects_bad_edges() {
    let a = Vertex::Service { service: s(0, 2), provider: NodeId(1) };
    let r = CompositionGraph::from_parts(ME, req(0, 8), &[(s(0, 2), NodeId(1))], &[(a, Vertex::End, 1.0)]);
    assert!(matches!(r, Err(CompositionError::InvalidGraph(_))));
    let r = CompositionGraph::from_parts(ME, req(0, 8), &[(s(0, 2), NodeId(1))], &[(Vertex::Start, a, -1.0)]);
    assert!(matches!(r, Err(CompositionError::InvalidGraph(_))));
}

#[test]
fn uniform_sampling_is_uniform() {
    use rand::SeedableRng;
    let mut svc = Vec::new();
    let mut edges = Vec::new();
    for p in 1..=2 {
        let a = Vertex::Service { service: s(0, 4), provider: NodeId(p) };
        svc.push((s(0, 4), NodeId(p)));
        edges.push((Vertex::Start, a, 1.0));
        for q in 3..=4 {
            let b = Vertex::Service { service: s(4, 8), provider: NodeId(q) };
            edges.push((a, b, 1.0));
        }
    }
    for q in 3..=4 {
        let b = Vertex::Service { service: s(4, 8), provider: NodeId(q) };
        svc.push((s(4, 8), NodeId(q)));
        edges.push((b, Vertex::End, 1.0));
    }
    let g = CompositionGraph::from_parts(ME, req(0, 8), &svc, &edges).unwrap();
    assert_eq!(count_paths(&g), 4);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
    let n = 100_000;
    let mut counts = std::collections::BTreeMap::new();
    for _ in 0..n {
        *counts.entry(sample_uniform_path(&g, &mut rng).unwrap().legs).or_insert(0u64) += 1;
    }
    assert_eq!(counts.len(), 4);
    let se = (0.25f64 * 0.75 / n as f64).sqrt();
    for c in counts.values() {
        assert!((*c as f64 / n as f64 - 0.25).abs() <= 3.0 * se);
    }
}

fn random_graph() -> impl Strategy<Value = CompositionGraph> {
    let svc = (0u8..4, 1u8..5, 1u32..4).prop_filter_map("typed", |(i, o, p)| ServiceId::new(i, i + o).ok().filter(|s| s.output() <= 5).map(|s| (s, NodeId(p))));
    (prop::collection::vec(svc, 1..=10), prop::collection::vec(prop_oneof![(0u32..6).prop_map(f64::from), Just(f64::INFINITY), 0.0..10.0f64], 200))
        .prop_map(|(mut services, weights)| {
            services.sort();
            services.dedup();
            let request = RequestTypes::new(0, 5).unwrap();
            let mut edges = Vec::new();
            let mut w = weights.into_iter().cycle();
            for &(sv, p) in &services {
                let v = Vertex::Service { service: sv, provider: p };
                if sv.input() == 0 {
                    edges.push((Vertex::Start, v, w.next().unwrap()));
                }
                if sv.output() == 5 {
                    edges.push((v, Vertex::End, w.next().unwrap()));
                }
                for &(t, q) in &services {
                    if t.input() == sv.output() {
                        edges.push((v, Vertex::Service { service: t, provider: q }, w.next().unwrap()));
                    }
                }
            }
            CompositionGraph::from_parts(ME, request, &services, &edges).unwrap()
        })
}

fn brute_ranking(g: &CompositionGraph, k: usize) -> Vec<CompositionPlan> {
    let mut all: Vec<_> = enumerate_paths(g).into_iter().filter(|p| p.estimated_total.is_finite()).collect();
    all.sort_by(|a, b| a.estimated_total.total_cmp(&b.estimated_total).then_with(|| a.legs.cmp(&b.legs)));
    all.truncate(k);
    all
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn search_matches_enumeration(g in random_graph()) {
        let brute = brute_ranking(&g, 3);
        match shortest_composition(&g) {
            Ok(p) => {
                prop_assert_eq!(&p, &brute[0]);
                prop_assert!(p.satisfies_chaining(g.request()));
            }
            Err(e) => {
                prop_assert!(brute.is_empty());
                prop_assert_eq!(e, CompositionError::NoFeasibleComposition);
            }
        }
        if let Ok(r) = rank_compositions(&g, 3) {
            prop_assert_eq!(&r.plans, &brute);
            prop_assert_eq!(r.truncated, brute.len() < 3);
        }
    }
}
