//! Composition selection policies.
//!
//! * MEV picks the plan with the minimum model estimate.
//! * AFIR greedily binds the next leg to the first encountered provider
//!   that lets the composition progress.
//! * RAN picks uniformly among all known compositions.
//! * ATO picks uniformly among single-service compositions.
//! * ORACLE_BEST is the after-the-fact best of a set of policies.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::composition::{
    build_composition_graph, build_service_graph, rank_compositions, reachable_outputs, sample_uniform_path,
    shortest_composition, CompositionError, CompositionGraph, CompositionPlan, RequestTypes, Vertex, WeightModel,
};
use crate::ids::{NodeId, ServiceId};
use crate::knowledge::KnowledgeBase;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PolicyKind {
    Mev,
    Afir,
    Ran,
    Ato,
    OracleBest,
}

impl PolicyKind {
    pub const SIMULATED: [PolicyKind; 4] = [PolicyKind::Mev, PolicyKind::Afir, PolicyKind::Ran, PolicyKind::Ato];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Mev => "MEV",
            PolicyKind::Afir => "AFIR",
            PolicyKind::Ran => "RAN",
            PolicyKind::Ato => "ATO",
            PolicyKind::OracleBest => "ORACLE_BEST",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown policy {0:?}")]
pub struct UnknownPolicy(pub String);

impl FromStr for PolicyKind {
    type Err = UnknownPolicy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "MEV" => Ok(PolicyKind::Mev),
            "AFIR" => Ok(PolicyKind::Afir),
            "RAN" => Ok(PolicyKind::Ran),
            "ATO" => Ok(PolicyKind::Ato),
            "ORACLE_BEST" | "ORACLE" => Ok(PolicyKind::OracleBest),
            _ => Err(UnknownPolicy(s.to_string())),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error(transparent)]
    Composition(#[from] CompositionError),
    #[error("no single-service composition is known")]
    NoSingleComponent,
    #[error("no policy results to compare")]
    Empty,
}

/// What a seeker knows when it has to choose.
#[derive(Debug, Clone, Copy)]
pub struct SelectionContext<'a> {
    pub kb: &'a KnowledgeBase,
    pub request: RequestTypes,
    /// Peers currently in contact with the seeker.
    pub contacts: &'a BTreeSet<NodeId>,
    pub weights: WeightModel,
}

impl SelectionContext<'_> {
    pub fn composition_graph(&self) -> Result<CompositionGraph, CompositionError> {
        let sg = build_service_graph(self.kb, self.request)?;
        build_composition_graph(&sg, self.kb, &self.weights)
    }
}

pub fn select_mev(ctx: &SelectionContext<'_>) -> Result<CompositionPlan, PolicyError> {
    Ok(shortest_composition(&ctx.composition_graph()?)?)
}

/// The plan in position `rank` (1-based) of the model's ranking. When
/// fewer plans exist the best one is returned with `false`.
pub fn select_mev_ranked(ctx: &SelectionContext<'_>, rank: usize) -> Result<(CompositionPlan, bool), PolicyError> {
    let mut r = rank_compositions(&ctx.composition_graph()?, rank.max(1))?;
    if r.plans.len() >= rank.max(1) {
        Ok((r.plans.swap_remove(rank.max(1) - 1), true))
    } else {
        Ok((r.plans.swap_remove(0), false))
    }
}

pub fn select_ran<R: Rng + ?Sized>(ctx: &SelectionContext<'_>, rng: &mut R) -> Result<CompositionPlan, PolicyError> {
    let g = ctx.composition_graph()?;
    sample_uniform_path(&g, rng).ok_or(PolicyError::Composition(CompositionError::NoCandidate))
}

pub fn select_ato<R: Rng + ?Sized>(ctx: &SelectionContext<'_>, rng: &mut R) -> Result<CompositionPlan, PolicyError> {
    let g = match ctx.composition_graph() {
        Ok(g) => g,
        Err(CompositionError::Unsatisfiable | CompositionError::NoCandidate) => return Err(PolicyError::NoSingleComponent),
        Err(e) => return Err(e.into()),
    };
    let direct = ServiceId::new(ctx.request.input(), ctx.request.output()).expect("valid request");
    let end = g.end();
    let options: Vec<CompositionPlan> = g
        .successors(0)
        .iter()
        .filter_map(|&(v, w_in)| match g.vertices()[v] {
            Vertex::Service { service, provider } if service == direct => {
                let w_out = g.successors(v).iter().find(|&&(t, _)| t == end).map(|&(_, w)| w)?;
                Some(CompositionPlan { legs: vec![(service, provider)], estimated_total: w_in + w_out })
            }
            _ => None,
        })
        .collect();
    if options.is_empty() {
        return Err(PolicyError::NoSingleComponent);
    }
    let i = rng.random_range(0..options.len());
    Ok(options.into_iter().nth(i).expect("index in range"))
}

/// AFIR's decision when the data holder meets `encountered`: the service
/// of `encountered` that consumes `frontier`, keeps the request output
/// reachable through services the holder knows of, and reaches the
/// highest type. `None` when the contact does not help. Services of
/// `excluded` (the seeker) are never used.
pub fn select_afir(kb: &KnowledgeBase, request: RequestTypes, frontier: u8, encountered: NodeId, excluded: NodeId) -> Option<ServiceId> {
    if encountered == excluded || encountered == kb.self_id() {
        return None;
    }
    let known: Vec<ServiceId> = kb.services().filter(|(p, _)| *p != excluded).map(|(_, s)| s.service_id).collect();
    kb.services_of(encountered)
        .map(|s| s.service_id)
        .filter(|s| s.input() == frontier && s.output() <= request.output())
        .filter(|s| reachable_outputs(&known, s.output()) & (1 << request.output()) != 0)
        .max_by_key(|s| s.output())
}

/// The fastest of `results`, ties going to the earliest listed.
pub fn oracle_best(results: &[(PolicyKind, f64)]) -> Result<PolicyKind, PolicyError> {
    let mut best: Option<(PolicyKind, f64)> = None;
    for &(p, t) in results {
        if best.is_none_or(|(_, b)| t < b) {
            best = Some((p, t));
        }
    }
    best.map(|(p, _)| p).ok_or(PolicyError::Empty)
}
