use std::cmp::Ordering;

use rand::Rng;
use smallvec::SmallVec;

use super::{CompositionError, CompositionGraph, CompositionPlan};
use crate::ids::{NodeId, ServiceId};

type Key = SmallVec<[(ServiceId, NodeId); 8]>;

#[derive(Debug, Clone)]
struct Prefix {
    cost: f64,
    key: Key,
}

fn order(a: &Prefix, b: &Prefix) -> Ordering {
    a.cost.total_cmp(&b.cost).then_with(|| a.key.cmp(&b.key))
}

/// The `top_k` cheapest finite Start→End paths and whether fewer than
/// `top_k` exist.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub plans: Vec<CompositionPlan>,
    pub truncated: bool,
}

/// The `top_k` lowest-weight paths, cheapest first. Paths with an infinite
/// weight are never returned. Ties are broken by the lexicographic order
/// of the (service, provider) sequence.
///
/// Keeps the best `top_k` prefixes at each vertex in topological order;
/// since every path of a DAG visits a vertex at most once, no loop
/// elimination is needed.
pub fn rank_compositions(cg: &CompositionGraph, top_k: usize) -> Result<Ranking, CompositionError> {
    if top_k == 0 {
        return Err(CompositionError::ZeroTopK);
    }
    let n = cg.vertices().len();
    let mut best: Vec<Vec<Prefix>> = vec![Vec::new(); n];
    best[0].push(Prefix { cost: 0.0, key: Key::new() });
    for v in 1..n {
        let mut cands: Vec<Prefix> = Vec::new();
        for &(u, w) in cg.predecessors(v) {
            for p in &best[u] {
                let cost = p.cost + w;
                if !cost.is_finite() {
                    continue;
                }
                let mut key = p.key.clone();
                if let Some(k) = cg.leg_key(v) {
                    key.push(k);
                }
                cands.push(Prefix { cost, key });
            }
        }
        cands.sort_by(order);
        cands.truncate(top_k);
        best[v] = cands;
    }
    let done = &best[n - 1];
    if done.is_empty() {
        return Err(CompositionError::NoFeasibleComposition);
    }
    Ok(Ranking {
        truncated: done.len() < top_k,
        plans: done.iter().map(|p| CompositionPlan { legs: p.key.to_vec(), estimated_total: p.cost }).collect(),
    })
}

/// Minimum-weight Start→End path.
pub fn shortest_composition(cg: &CompositionGraph) -> Result<CompositionPlan, CompositionError> {
    Ok(rank_compositions(cg, 1)?.plans.remove(0))
}

/// Number of paths from each vertex to End, counting every edge.
fn paths_to_end(cg: &CompositionGraph) -> Vec<u128> {
    let n = cg.vertices().len();
    let mut cnt = vec![0u128; n];
    cnt[n - 1] = 1;
    for v in (0..n - 1).rev() {
        cnt[v] = cg.successors(v).iter().fold(0u128, |acc, &(t, _)| acc.saturating_add(cnt[t]));
    }
    cnt
}

/// Number of Start→End paths, whatever their weight.
pub fn count_paths(cg: &CompositionGraph) -> u128 {
    paths_to_end(cg)[0]
}

/// Draws one Start→End path uniformly at random among all of them.
pub fn sample_uniform_path<R: Rng + ?Sized>(cg: &CompositionGraph, rng: &mut R) -> Option<CompositionPlan> {
    let cnt = paths_to_end(cg);
    if cnt[0] == 0 {
        return None;
    }
    let mut legs = Vec::new();
    let mut total = 0.0;
    let mut at = 0;
    let end = cg.end();
    while at != end {
        let mut r = rng.random_range(0..cnt[at]);
        let mut next = None;
        for &(t, w) in cg.successors(at) {
            if r < cnt[t] {
                next = Some((t, w));
                break;
            }
            r -= cnt[t];
        }
        let (t, w) = next.expect("path counts are consistent");
        total += w;
        if let Some(k) = cg.leg_key(t) {
            legs.push(k);
        }
        at = t;
    }
    Some(CompositionPlan { legs, estimated_total: total })
}

/// Every Start→End path with its weight, in depth-first order. Intended
/// for small graphs.
pub fn enumerate_paths(cg: &CompositionGraph) -> Vec<CompositionPlan> {
    fn walk(cg: &CompositionGraph, at: usize, cost: f64, legs: &mut Vec<(ServiceId, NodeId)>, out: &mut Vec<CompositionPlan>) {
        if at == cg.end() {
            out.push(CompositionPlan { legs: legs.clone(), estimated_total: cost });
            return;
        }
        for &(t, w) in cg.successors(at) {
            let pushed = cg.leg_key(t).map(|k| legs.push(k)).is_some();
            walk(cg, t, cost + w, legs, out);
            if pushed {
                legs.pop();
            }
        }
    }
    let mut out = Vec::new();
    walk(cg, 0, 0.0, &mut Vec::new(), &mut out);
    out
}
