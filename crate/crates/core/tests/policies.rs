use std::collections::BTreeSet;

use oppcomp::composition::{enumerate_paths, RequestTypes, WeightModel};
use oppcomp::knowledge::{ContactKind, KnowledgeBase, LoadStats, ServiceAdvert};
use oppcomp::policies::*;
use oppcomp::{NodeId, ServiceId};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn s(i: u8, o: u8) -> ServiceId {
    ServiceId::new(i, o).unwrap()
}

fn req(i: u8, o: u8) -> RequestTypes {
    RequestTypes::new(i, o).unwrap()
}

const ME: NodeId = NodeId(0);

fn meet(kb: &mut KnowledgeBase, p: NodeId, contact: f64, gap: f64) {
    kb.record_contact_event(p, ContactKind::Up, 1.0).unwrap();
    kb.record_contact_event(p, ContactKind::Down, 1.0 + contact).unwrap();
    kb.record_contact_event(p, ContactKind::Up, 1.0 + contact + gap).unwrap();
}

fn advertise(kb: &mut KnowledgeBase, p: NodeId, services: &[ServiceId], d: f64, lambda: f64) {
    let ads: Vec<_> = services.iter().map(|&service_id| ServiceAdvert { service_id, d, d2: 2.0 * d * d }).collect();
    kb.merge_peer_advertisement(p, &ads, LoadStats { lambda, l: 1.0, l2: 1.0 }).unwrap();
}

fn weights() -> WeightModel {
    WeightModel { input_bytes: 40_000.0, output_bytes: 40_000.0, default_throughput: 250_000.0 }
}

fn ctx<'a>(kb: &'a KnowledgeBase, contacts: &'a BTreeSet<NodeId>, r: RequestTypes) -> SelectionContext<'a> {
    SelectionContext { kb, request: r, contacts, weights: weights() }
}

#[test]
fn mev_single_candidate_and_argmin() {
    let none = BTreeSet::new();
    let mut kb = KnowledgeBase::new(ME);
    meet(&mut kb, NodeId(1), 50.0, 200.0);
    advertise(&mut kb, NodeId(1), &[s(0, 8)], 75.0, 0.001);
    let p = select_mev(&ctx(&kb, &none, req(0, 8))).unwrap();
    assert_eq!(p.legs, vec![(s(0, 8), NodeId(1))]);

    meet(&mut kb, NodeId(2), 50.0, 200.0);
    advertise(&mut kb, NodeId(2), &[s(0, 8)], 60.0, 0.001);
    let p = select_mev(&ctx(&kb, &none, req(0, 8))).unwrap();
    assert_eq!(p.legs, vec![(s(0, 8), NodeId(2))]);

    // An update making node 1 faster switches the choice.
    advertise(&mut kb, NodeId(1), &[s(0, 8)], 30.0, 0.001);
    let p = select_mev(&ctx(&kb, &none, req(0, 8))).unwrap();
    assert_eq!(p.legs, vec![(s(0, 8), NodeId(1))]);
}

#[test]
fn mev_ranked_positions() {
    let none = BTreeSet::new();
    let mut kb = KnowledgeBase::new(ME);
    for (p, d) in [(1, 75.0), (2, 60.0), (3, 90.0)] {
        meet(&mut kb, NodeId(p), 50.0, 200.0);
        advertise(&mut kb, NodeId(p), &[s(0, 8)], d, 0.001);
    }
    let c = ctx(&kb, &none, req(0, 8));
    assert_eq!(select_mev_ranked(&c, 1).unwrap().0, select_mev(&c).unwrap());
    assert_eq!(select_mev_ranked(&c, 3).unwrap().0.legs, vec![(s(0, 8), NodeId(3))]);
    let (p, exact) = select_mev_ranked(&c, 5).unwrap();
    assert!(!exact);
    assert_eq!(p, select_mev(&c).unwrap());
}

#[test]
fn afir_progress_rule() {
    let mut kb = KnowledgeBase::new(ME);
    kb.record_contact_event(NodeId(1), ContactKind::Up, 1.0).unwrap();
    advertise(&mut kb, NodeId(1), &[s(0, 2)], 75.0, 0.0);
    advertise(&mut kb, NodeId(2), &[s(2, 8)], 75.0, 0.0);
    advertise(&mut kb, NodeId(3), &[s(3, 5)], 75.0, 0.0);
    advertise(&mut kb, NodeId(4), &[s(0, 8), s(0, 2)], 75.0, 0.0);
    advertise(&mut kb, NodeId(5), &[s(0, 3)], 75.0, 0.0);
    let r = req(0, 8);
    assert_eq!(select_afir(&kb, r, 0, NodeId(1), ME), Some(s(0, 2)));
    assert_eq!(select_afir(&kb, r, 0, NodeId(3), ME), None);
    assert_eq!(select_afir(&kb, r, 0, NodeId(4), ME), Some(s(0, 8)));
    // (0,3) leads nowhere: 3 only continues to 5.
    assert_eq!(select_afir(&kb, r, 0, NodeId(5), ME), None);
    assert_eq!(select_afir(&kb, r, 0, NodeId(1), NodeId(1)), None);
}

#[test]
fn ran_and_ato_are_reproducible() {
    let none = BTreeSet::new();
    let mut kb = KnowledgeBase::new(ME);
    for p in 1..=4 {
        meet(&mut kb, NodeId(p), 50.0, 200.0);
        advertise(&mut kb, NodeId(p), &[s(0, 8), s(0, 3), s(3, 8)], 75.0, 0.001);
    }
    let c = ctx(&kb, &none, req(0, 8));
    for seed in 0..20 {
        let a = select_ran(&c, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let b = select_ran(&c, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        assert_eq!(a, b);
        assert!(a.satisfies_chaining(req(0, 8)));
        let x = select_ato(&c, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        assert_eq!(x, select_ato(&c, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap());
        assert_eq!(x.legs.len(), 1);
        assert_eq!(x.legs[0].0, s(0, 8));
    }
}

#[test]
fn ato_choices() {
    let none = BTreeSet::new();
    let mut kb = KnowledgeBase::new(ME);
    for p in [3, 4] {
        meet(&mut kb, NodeId(p), 50.0, 200.0);
        advertise(&mut kb, NodeId(p), &[s(0, 8)], 75.0, 0.001);
    }
    let c = ctx(&kb, &none, req(0, 8));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let picks: BTreeSet<NodeId> = (0..200).map(|_| select_ato(&c, &mut rng).unwrap().legs[0].1).collect();
    assert_eq!(picks, [NodeId(3), NodeId(4)].into_iter().collect());

    let mut chain = KnowledgeBase::new(ME);
    meet(&mut chain, NodeId(1), 50.0, 200.0);
    advertise(&mut chain, NodeId(1), &[s(0, 2), s(2, 8)], 75.0, 0.001);
    let c = ctx(&chain, &none, req(0, 8));
    assert_eq!(select_ato(&c, &mut rng), Err(PolicyError::NoSingleComponent));
    assert!(select_ran(&c, &mut rng).is_ok());
}

fn kb_strategy() -> impl Strategy<Value = KnowledgeBase> {
    let peer = (1u32..6, 5.0..200.0f64, 20.0..600.0f64, 20.0..120.0f64, 0.0..0.01f64, prop::collection::vec(0usize..10, 1..5));
    prop::collection::vec(peer, 1..5).prop_map(|peers| {
        let menu = [s(0, 2), s(2, 8), s(0, 8), s(2, 5), s(5, 8), s(0, 5), s(1, 8), s(0, 1), s(1, 2), s(3, 8)];
        let mut kb = KnowledgeBase::new(ME);
        for (p, c, g, d, lam, svc) in peers {
            let id = NodeId(p);
            if kb.peer(id).is_none() {
                meet(&mut kb, id, c, g);
            }
            let list: Vec<_> = svc.into_iter().map(|i| menu[i]).collect();
            advertise(&mut kb, id, &list, d, lam);
        }
        kb
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn mev_is_argmin_over_enumeration(kb in kb_strategy()) {
        let none = BTreeSet::new();
        let c = ctx(&kb, &none, req(0, 8));
        let Ok(g) = c.composition_graph() else { return Ok(()) };
        let min = enumerate_paths(&g).iter().map(|p| p.estimated_total).fold(f64::INFINITY, f64::min);
        match select_mev(&c) {
            Ok(p) => {
                prop_assert_eq!(p.estimated_total, min);
                prop_assert!(p.satisfies_chaining(req(0, 8)));
            }
            Err(_) => prop_assert!(min.is_infinite()),
        }
    }

    #[test]
    fn afir_keeps_end_reachable(kb in kb_strategy(), frontier in 0u8..3, who in 1u32..6) {
        if let Some(svc) = select_afir(&kb, req(0, 8), frontier, NodeId(who), ME) {
            prop_assert_eq!(svc.input(), frontier);
            let known: Vec<_> = kb.services().map(|(_, s)| s.service_id).collect();
            let mask = oppcomp::composition::reachable_outputs(&known, svc.output());
            prop_assert!(mask & (1 << 8) != 0);
        }
    }
}
