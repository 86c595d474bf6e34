use std::collections::BTreeMap;
use std::fmt::Write as _;

use log::{trace, warn};

use super::{CompositionError, RequestTypes, ServiceGraph};
use crate::ids::{NodeId, ServiceId};
use crate::knowledge::{KnowledgeBase, LoadStats, PeerStats, ProviderServiceStats};
use crate::model::{estimate_single, expected_queue_delay, expected_theta_composition, LinkParams, ProviderParams, TransferSizes};

/// A vertex of the composition graph. Ordering puts Start first, then
/// services by (service, provider), then End.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Vertex {
    Start,
    Service { service: ServiceId, provider: NodeId },
    End,
}

impl Vertex {
    fn key(self) -> Option<(ServiceId, NodeId)> {
        match self {
            Vertex::Service { service, provider } => Some((service, provider)),
            _ => None,
        }
    }
}

/// Weighted DAG from Start to End through (service, provider) vertices.
///
/// Vertices are stored in a topological order: Start, services sorted by
/// (input type, output type, provider), End. Weights are non-negative or
/// `+∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositionGraph {
    seeker: NodeId,
    request: RequestTypes,
    vertices: Vec<Vertex>,
    succ: Vec<Vec<(usize, f64)>>,
    pred: Vec<Vec<(usize, f64)>>,
}

impl CompositionGraph {
    /// Builds a graph from explicit vertices and weighted edges. Edges must
    /// respect type chaining; vertices not on any Start→End path are
    /// dropped.
    pub fn from_parts(
        seeker: NodeId,
        request: RequestTypes,
        services: &[(ServiceId, NodeId)],
        edges: &[(Vertex, Vertex, f64)],
    ) -> Result<Self, CompositionError> {
        let bad = |m: String| Err(CompositionError::InvalidGraph(m));
        let mut vertices = vec![Vertex::Start];
        let mut sorted: Vec<_> = services.to_vec();
        sorted.sort();
        sorted.dedup();
        vertices.extend(sorted.iter().map(|&(service, provider)| Vertex::Service { service, provider }));
        vertices.push(Vertex::End);
        let index: BTreeMap<Vertex, usize> = vertices.iter().enumerate().map(|(i, v)| (*v, i)).collect();
        let mut succ = vec![Vec::new(); vertices.len()];
        for &(from, to, w) in edges {
            if !(w >= 0.0) {
                return bad(format!("weight {w} on {from:?}->{to:?}"));
            }
            let (Some(&a), Some(&b)) = (index.get(&from), index.get(&to)) else {
                return bad(format!("unknown vertex in {from:?}->{to:?}"));
            };
            let typed = match (from, to) {
                (Vertex::Start, Vertex::Service { service, .. }) => service.input() == request.input(),
                (Vertex::Service { service: s, .. }, Vertex::Service { service: t, .. }) => s.output() == t.input(),
                (Vertex::Service { service, .. }, Vertex::End) => service.output() == request.output(),
                _ => false,
            };
            if !typed {
                return bad(format!("edge {from:?}->{to:?} breaks type chaining"));
            }
            if succ[a].iter().any(|&(t, _)| t == b) {
                return bad(format!("duplicate edge {from:?}->{to:?}"));
            }
            succ[a].push((b, w));
        }
        Ok(Self::pruned(seeker, request, vertices, succ))
    }

    fn pruned(seeker: NodeId, request: RequestTypes, vertices: Vec<Vertex>, succ: Vec<Vec<(usize, f64)>>) -> Self {
        let n = vertices.len();
        let mut fwd = vec![false; n];
        fwd[0] = true;
        for v in 0..n {
            if fwd[v] {
                for &(t, _) in &succ[v] {
                    fwd[t] = true;
                }
            }
        }
        let mut bwd = vec![false; n];
        bwd[n - 1] = true;
        for v in (0..n).rev() {
            if succ[v].iter().any(|&(t, _)| bwd[t]) {
                bwd[v] = true;
            }
        }
        let keep: Vec<bool> = (0..n).map(|v| fwd[v] && bwd[v] || v == 0 || v == n - 1).collect();
        let mut remap = vec![usize::MAX; n];
        let mut kept = Vec::new();
        for v in 0..n {
            if keep[v] {
                remap[v] = kept.len();
                kept.push(vertices[v]);
            }
        }
        let mut new_succ = vec![Vec::new(); kept.len()];
        let mut pred = vec![Vec::new(); kept.len()];
        for v in 0..n {
            if !keep[v] {
                continue;
            }
            for &(t, w) in &succ[v] {
                if keep[t] && fwd[v] && bwd[t] {
                    new_succ[remap[v]].push((remap[t], w));
                    pred[remap[t]].push((remap[v], w));
                }
            }
        }
        for list in new_succ.iter_mut().chain(pred.iter_mut()) {
            list.sort_by_key(|&(t, _)| t);
        }
        CompositionGraph { seeker, request, vertices: kept, succ: new_succ, pred }
    }

    pub fn seeker(&self) -> NodeId {
        self.seeker
    }

    pub fn request(&self) -> RequestTypes {
        self.request
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.len() <= 2
    }

    pub fn end(&self) -> usize {
        self.vertices.len() - 1
    }

    /// Outgoing edges of vertex `v` as (target index, weight).
    pub fn successors(&self, v: usize) -> &[(usize, f64)] {
        &self.succ[v]
    }

    pub fn predecessors(&self, v: usize) -> &[(usize, f64)] {
        &self.pred[v]
    }

    pub(crate) fn leg_key(&self, v: usize) -> Option<(ServiceId, NodeId)> {
        self.vertices[v].key()
    }

    pub fn edges(&self) -> impl Iterator<Item = (Vertex, Vertex, f64)> + '_ {
        self.succ.iter().enumerate().flat_map(move |(a, out)| out.iter().map(move |&(b, w)| (self.vertices[a], self.vertices[b], w)))
    }

    fn index_of(&self, v: Vertex) -> Option<usize> {
        self.vertices.binary_search(&v).ok()
    }

    /// Weight of the path through `legs`, summed from Start, or `None`
    /// when it is not a path of this graph.
    pub fn path_weight(&self, legs: &[(ServiceId, NodeId)]) -> Option<f64> {
        let mut at = 0;
        let mut total = 0.0;
        let hops = legs.iter().map(|&(service, provider)| Vertex::Service { service, provider }).chain([Vertex::End]);
        for v in hops {
            let to = self.index_of(v)?;
            let &(_, w) = self.succ[at].iter().find(|&&(t, _)| t == to)?;
            total += w;
            at = to;
        }
        Some(total)
    }

    /// Graphviz rendering for inspection.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph composition {\n  rankdir=LR;\n");
        for (i, v) in self.vertices.iter().enumerate() {
            let label = match v {
                Vertex::Start => format!("Start@{}", self.seeker),
                Vertex::End => format!("End@{}", self.seeker),
                Vertex::Service { service, provider } => format!("{service}@{provider}"),
            };
            let _ = writeln!(s, "  v{i} [label=\"{label}\"];");
        }
        for (a, out) in self.succ.iter().enumerate() {
            for &(b, w) in out {
                let _ = writeln!(s, "  v{a} -> v{b} [label=\"{w:.3}\"];");
            }
        }
        s.push_str("}\n");
        s
    }
}

/// Data sizes and defaults used to weigh a composition graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightModel {
    pub input_bytes: f64,
    pub output_bytes: f64,
    /// Throughput assumed for links without a measurement yet.
    pub default_throughput: f64,
}

fn link_of(stats: &PeerStats, default_throughput: f64) -> Option<LinkParams> {
    LinkParams::new(stats.delta()?, stats.delta_prime()?, stats.throughput().unwrap_or(default_throughput)).ok()
}

/// Mean residual wait for the next contact seen from a random instant:
/// the probability of being out of contact times the mean inter-contact.
fn steady_residual_wait(link: &LinkParams) -> f64 {
    let (d, dp) = (link.delta(), link.delta_prime());
    d / (dp * (d + dp))
}

fn provider_params(stats: &ProviderServiceStats) -> Option<ProviderParams> {
    let load = if stats.l > 0.0 { LoadStats { lambda: stats.lambda, l: stats.l, l2: stats.l2 } } else { LoadStats::IDLE };
    ProviderParams::from_raw_batch_moments(load.lambda, load.l, load.l2, stats.d, stats.d2).ok()
}

struct Candidate {
    service: ServiceId,
    provider: NodeId,
    prov: ProviderParams,
}

/// Weighs every (service, provider) alternative with the expected-time
/// model.
///
/// Start edges carry E[W] + E[B] + E[DQ] + E[DS] toward the first
/// provider, intermediate edges the handoff estimate plus the next
/// provider's E[DQ] + E[DS] (no transfer when a provider hands off to
/// itself), and End edges the output transfer back to the seeker: the
/// single-service form when the request is served by one service,
/// otherwise the composition form. Handoff links come from statistics the
/// upstream or downstream provider reported; without them the seeker's
/// own link to the downstream provider stands in. Missing TQ samples are
/// replaced by the steady-state residual wait for the next contact.
pub fn build_composition_graph(sg: &ServiceGraph, kb: &KnowledgeBase, model: &WeightModel) -> Result<CompositionGraph, CompositionError> {
    let me = kb.self_id();
    let request = sg.request();
    let mut cands = Vec::new();
    for (p, stats) in kb.services() {
        if p == me || !sg.contains(stats.service_id) {
            continue;
        }
        if !kb.peer(p).is_some_and(PeerStats::is_usable) {
            continue;
        }
        match provider_params(stats) {
            Some(prov) => cands.push(Candidate { service: stats.service_id, provider: p, prov }),
            None => warn!("ignoring inconsistent statistics for {} at {p}", stats.service_id),
        }
    }
    if cands.is_empty() {
        return Err(CompositionError::NoCandidate);
    }
    cands.sort_by_key(|c| (c.service, c.provider));

    let mut seeker_links: BTreeMap<NodeId, (LinkParams, &PeerStats)> = BTreeMap::new();
    for c in &cands {
        if let std::collections::btree_map::Entry::Vacant(e) = seeker_links.entry(c.provider) {
            let stats = kb.peer(c.provider).expect("usable peer");
            match link_of(stats, model.default_throughput) {
                Some(l) => {
                    e.insert((l, stats));
                }
                None => warn!("no link parameters for {}", c.provider),
            }
        }
    }
    cands.retain(|c| seeker_links.contains_key(&c.provider));

    let handoff = |p: NodeId, q: NodeId| -> (LinkParams, f64) {
        let reported = kb.reported_link(p, q).or_else(|| kb.reported_link(q, p));
        if let Some(r) = reported {
            if let Ok(l) = LinkParams::new(r.delta, r.delta_prime, r.throughput) {
                return (l, r.tq.unwrap_or_else(|| steady_residual_wait(&l)));
            }
        }
        trace!("no reported link {p}-{q}; using the seeker's link to {q}");
        let l = seeker_links[&q].0;
        (l, steady_residual_wait(&l))
    };

    let mut vertices = vec![Vertex::Start];
    vertices.extend(cands.iter().map(|c| Vertex::Service { service: c.service, provider: c.provider }));
    vertices.push(Vertex::End);
    let end = vertices.len() - 1;
    let mut succ = vec![Vec::new(); vertices.len()];
    let out_sizes = TransferSizes::new(0.0, model.output_bytes).expect("valid sizes");

    let qd = |c: &Candidate| expected_queue_delay(&c.prov).unwrap_or(f64::INFINITY);
    for (i, c) in cands.iter().enumerate() {
        let v = i + 1;
        let (link, stats) = seeker_links[&c.provider];
        let sizes = TransferSizes::new(
            model.input_bytes + stats.k_queue,
            model.output_bytes + stats.kprime_queue_avg().unwrap_or(0.0),
        )
        .expect("valid sizes");
        let starts = c.service.input() == request.input();
        let single = starts && c.service.output() == request.output();
        if starts {
            let e = estimate_single(&link, &c.prov, &sizes, stats.in_contact);
            succ[0].push((v, e.e_w + e.e_b + e.e_dq + e.e_ds));
            if single {
                succ[v].push((end, e.e_theta));
            }
        }
        if c.service.output() == request.output() && !single {
            let tq = stats.tq().unwrap_or_else(|| steady_residual_wait(&link));
            let back = TransferSizes::new(0.0, sizes.kprime()).expect("valid sizes");
            succ[v].push((end, expected_theta_composition(&link, &back, tq).expect("non-negative tq")));
        }
        for (j, d) in cands.iter().enumerate() {
            if d.service.input() != c.service.output() {
                continue;
            }
            let theta = if d.provider == c.provider {
                0.0
            } else {
                let (l, tq) = handoff(c.provider, d.provider);
                expected_theta_composition(&l, &out_sizes, tq).expect("non-negative tq")
            };
            succ[v].push((j + 1, theta + qd(d) + d.prov.d()));
        }
    }
    for list in succ.iter_mut() {
        list.sort_by_key(|&(t, _)| t);
    }
    let g = CompositionGraph::pruned(me, request, vertices, succ);
    if g.is_empty() {
        return Err(CompositionError::NoCandidate);
    }
    Ok(g)
}
