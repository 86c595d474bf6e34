//! Service graphs, weighted composition graphs and path search.
//!
//! A [`ServiceGraph`] links services whose output type feeds another's
//! input. A [`CompositionGraph`] expands every service into one vertex per
//! known provider and weighs edges with model estimates, so that the
//! weight of a Start→End path is the expected provisioning time of the
//! corresponding plan.

mod graph;
mod search;
mod service_graph;

pub use graph::{build_composition_graph, CompositionGraph, Vertex, WeightModel};
pub use search::{count_paths, enumerate_paths, rank_compositions, sample_uniform_path, shortest_composition, Ranking};
pub use service_graph::{build_service_graph, reachable_outputs, ServiceGraph};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{NodeId, ServiceId, MAX_TYPE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompositionError {
    #[error("invalid request {0}->{1}")]
    InvalidRequest(u8, u8),
    #[error("no chain of known services satisfies the request")]
    Unsatisfiable,
    #[error("no known provider with usable statistics")]
    NoCandidate,
    #[error("every composition has an infinite estimate")]
    NoFeasibleComposition,
    #[error("top_k must be at least 1")]
    ZeroTopK,
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
}

/// Input and output data types of a request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RequestTypes {
    input: u8,
    output: u8,
}

impl RequestTypes {
    pub fn new(input: u8, output: u8) -> Result<Self, CompositionError> {
        if input < output && output <= MAX_TYPE {
            Ok(RequestTypes { input, output })
        } else {
            Err(CompositionError::InvalidRequest(input, output))
        }
    }

    pub fn input(self) -> u8 {
        self.input
    }

    pub fn output(self) -> u8 {
        self.output
    }

    /// Every valid request type pair, in order.
    pub fn all() -> impl Iterator<Item = RequestTypes> {
        ServiceId::all().map(|s| RequestTypes { input: s.input(), output: s.output() })
    }
}

impl fmt::Display for RequestTypes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.input, self.output)
    }
}

/// An ordered chain of (service, provider) legs and its estimated time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompositionPlan {
    pub legs: Vec<(ServiceId, NodeId)>,
    pub estimated_total: f64,
}

impl CompositionPlan {
    /// Whether the legs chain from the request input to its output.
    pub fn satisfies_chaining(&self, request: RequestTypes) -> bool {
        legs_chain(&self.legs, request)
    }

    /// Compact text form such as `0-2@5;2-8@7`.
    pub fn describe(&self) -> String {
        describe_legs(&self.legs)
    }
}

pub fn legs_chain(legs: &[(ServiceId, NodeId)], request: RequestTypes) -> bool {
    let Some(first) = legs.first() else { return false };
    let last = legs.last().expect("nonempty");
    first.0.input() == request.input()
        && last.0.output() == request.output()
        && legs.windows(2).all(|w| w[0].0.output() == w[1].0.input())
}

pub fn describe_legs(legs: &[(ServiceId, NodeId)]) -> String {
    legs.iter().map(|(s, p)| format!("{s}@{p}")).collect::<Vec<_>>().join(";")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(i: u8, o: u8) -> ServiceId {
        ServiceId::new(i, o).unwrap()
    }

    #[test]
    fn chaining() {
        let r = RequestTypes::new(0, 8).unwrap();
        let ok = CompositionPlan { legs: vec![(s(0, 2), NodeId(1)), (s(2, 8), NodeId(1))], estimated_total: 1.0 };
        assert!(ok.satisfies_chaining(r));
        assert_eq!(ok.describe(), "0-2@1;2-8@1");
        let gap = CompositionPlan { legs: vec![(s(0, 2), NodeId(1)), (s(3, 8), NodeId(1))], estimated_total: 1.0 };
        assert!(!gap.satisfies_chaining(r));
        let empty = CompositionPlan { legs: vec![], estimated_total: 0.0 };
        assert!(!empty.satisfies_chaining(r));
        assert!(RequestTypes::new(4, 4).is_err());
        assert_eq!(RequestTypes::all().count(), 36);
    }
}
