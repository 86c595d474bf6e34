use std::collections::{BTreeMap, BTreeSet};

use crate::ids::NodeId;

/// Rates for the transfers `(src, dst)` currently progressing.
///
/// Every node splits `capacity` equally among the distinct neighbours it
/// has at least one active transfer with. A transfer gets the smaller of
/// its two endpoint shares, divided among the transfers sharing that link
/// (at most one per direction).
pub fn step_bandwidth_allocation(active: &[(NodeId, NodeId)], capacity: f64) -> Vec<f64> {
    let mut partners: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
    let mut per_link: BTreeMap<(NodeId, NodeId), usize> = BTreeMap::new();
    for &(s, d) in active {
        partners.entry(s).or_default().insert(d);
        partners.entry(d).or_default().insert(s);
        *per_link.entry((s.min(d), s.max(d))).or_default() += 1;
    }
    active
        .iter()
        .map(|&(s, d)| {
            let share = |n: NodeId| capacity / partners[&n].len() as f64;
            share(s).min(share(d)) / per_link[&(s.min(d), s.max(d))] as f64
        })
        .collect()
}
