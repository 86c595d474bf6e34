use std::collections::BTreeSet;

use super::{CompositionError, RequestTypes};
use crate::ids::{ServiceId, MAX_TYPE};
use crate::knowledge::KnowledgeBase;

/// Services usable for one request: each lies on some chain from the
/// request input type to its output type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceGraph {
    request: RequestTypes,
    services: Vec<ServiceId>,
}

/// Bit set of the types reachable from `from` through `services`
/// (bit `t` set for type `t`, including `from` itself).
pub fn reachable_outputs(services: &[ServiceId], from: u8) -> u16 {
    let mut mask = 1u16 << from;
    // Services only increase the type, so one pass in input order suffices.
    let mut sorted = services.to_vec();
    sorted.sort();
    for s in sorted {
        if mask & (1 << s.input()) != 0 {
            mask |= 1 << s.output();
        }
    }
    mask
}

/// Bit set of the types from which `to` is reachable through `services`.
fn coreachable(services: &[ServiceId], to: u8) -> u16 {
    let mut mask = 1u16 << to;
    let mut sorted = services.to_vec();
    sorted.sort_by(|a, b| b.cmp(a));
    for s in sorted {
        if mask & (1 << s.output()) != 0 {
            mask |= 1 << s.input();
        }
    }
    mask
}

impl ServiceGraph {
    /// Keeps the services of `known` that lie on a chain satisfying the
    /// request.
    pub fn from_services(known: impl IntoIterator<Item = ServiceId>, request: RequestTypes) -> Result<Self, CompositionError> {
        let all: Vec<ServiceId> = known.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let fwd = reachable_outputs(&all, request.input());
        let bwd = coreachable(&all, request.output());
        let services: Vec<ServiceId> = all
            .into_iter()
            .filter(|s| s.input() >= request.input() && s.output() <= request.output())
            .filter(|s| fwd & (1 << s.input()) != 0 && bwd & (1 << s.output()) != 0)
            .collect();
        if services.is_empty() {
            return Err(CompositionError::Unsatisfiable);
        }
        Ok(ServiceGraph { request, services })
    }

    pub fn request(&self) -> RequestTypes {
        self.request
    }

    pub fn services(&self) -> &[ServiceId] {
        &self.services
    }

    pub fn contains(&self, s: ServiceId) -> bool {
        self.services.binary_search(&s).is_ok()
    }

    /// Every Start→End chain of services, in lexicographic order.
    pub fn paths(&self) -> Vec<Vec<ServiceId>> {
        fn walk(g: &ServiceGraph, at: u8, cur: &mut Vec<ServiceId>, out: &mut Vec<Vec<ServiceId>>) {
            if at == g.request.output() {
                out.push(cur.clone());
                return;
            }
            for &s in g.services.iter().filter(|s| s.input() == at) {
                cur.push(s);
                walk(g, s.output(), cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        walk(self, self.request.input(), &mut Vec::new(), &mut out);
        out
    }
}

/// Service graph over every service the knowledge base knows a provider
/// for (the node's own services excluded).
pub fn build_service_graph(kb: &KnowledgeBase, request: RequestTypes) -> Result<ServiceGraph, CompositionError> {
    let me = kb.self_id();
    ServiceGraph::from_services(kb.services().filter(|(p, _)| *p != me).map(|(_, s)| s.service_id), request)
}

const _: () = assert!(MAX_TYPE < 16);

#[cfg(test)]
mod tests {
    use super::*;

    fn s(i: u8, o: u8) -> ServiceId {
        ServiceId::new(i, o).unwrap()
    }

    fn req(i: u8, o: u8) -> RequestTypes {
        RequestTypes::new(i, o).unwrap()
    }

    #[test]
    fn two_paths() {
        let g = ServiceGraph::from_services([s(0, 2), s(2, 8), s(0, 8)], req(0, 8)).unwrap();
        assert_eq!(g.paths(), vec![vec![s(0, 2), s(2, 8)], vec![s(0, 8)]]);
    }

    #[test]
    fn unsatisfiable() {
        assert_eq!(ServiceGraph::from_services([s(0, 2)], req(0, 8)), Err(CompositionError::Unsatisfiable));
    }

    #[test]
    fn single() {
        let g = ServiceGraph::from_services([s(0, 8)], req(0, 8)).unwrap();
        assert_eq!(g.paths(), vec![vec![s(0, 8)]]);
    }

    #[test]
    fn prunes_dead_ends() {
        let g = ServiceGraph::from_services([s(0, 2), s(2, 8), s(2, 5), s(1, 8), s(0, 3)], req(0, 8)).unwrap();
        assert_eq!(g.services(), &[s(0, 2), s(2, 8)]);
        assert!(!g.contains(s(2, 5)));
    }

    #[test]
    fn reachability_mask() {
        let m = reachable_outputs(&[s(0, 2), s(2, 5), s(3, 8)], 0);
        assert_eq!(m, (1 << 0) | (1 << 2) | (1 << 5));
    }
}
