use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::composition::RequestTypes;
use crate::ids::{NodeId, ServiceId};
use crate::policies::{PolicyKind, UnknownPolicy};

use super::cpu::{FLIP_PROB, QUANTUM};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid {field}: {reason}")]
    Config { field: &'static str, reason: String },
    #[error("invalid trace: {0}")]
    Trace(String),
    #[error("{0} cannot drive a simulation on its own")]
    NotSimulable(PolicyKind),
}

fn bad(field: &'static str, reason: impl Into<String>) -> SimError {
    SimError::Config { field, reason: reason.into() }
}

/// One simulated scenario, apart from the contact trace and the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n_nodes: u32,
    pub duration: f64,
    /// No requests are generated before this time.
    pub warmup: f64,
    /// Bounds of the uniform gap between consecutive requests.
    pub request_interval: (f64, f64),
    /// Size of every input and output parameter, in bytes.
    pub io_bytes: f64,
    /// Mean of the exponential execution time of every service.
    pub exec_mean: f64,
    pub cpu_max: u32,
    #[serde(default = "default_flip_prob")]
    pub cpu_flip_prob: f64,
    #[serde(default = "default_quantum")]
    pub cpu_quantum: f64,
    /// Per-node radio capacity in bytes per second.
    pub capacity: f64,
    /// Fraction of nodes offering each service.
    pub density: f64,
    /// Explicit (provider, service) offers; replaces `density`.
    #[serde(default)]
    pub placement: Option<Vec<(NodeId, ServiceId)>>,
    /// Requests are drawn uniformly from this list; all 36 by default.
    #[serde(default)]
    pub request_types: Option<Vec<RequestTypes>>,
    /// Nodes that issue requests; all by default.
    #[serde(default)]
    pub seekers: Option<Vec<NodeId>>,
    /// Keep a per-segment log of transfer progress.
    #[serde(default)]
    pub log_transfers: bool,
}

fn default_flip_prob() -> f64 {
    FLIP_PROB
}

fn default_quantum() -> f64 {
    QUANTUM
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_nodes: 30,
            duration: 100_000.0,
            warmup: 10_000.0,
            request_interval: (40.0, 80.0),
            io_bytes: 40_000.0,
            exec_mean: 75.0,
            cpu_max: 0,
            cpu_flip_prob: FLIP_PROB,
            cpu_quantum: QUANTUM,
            capacity: 250_000.0,
            density: 0.25,
            placement: None,
            request_types: None,
            seekers: None,
            log_transfers: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let finite_nonneg = |field, x: f64| if x.is_finite() && x >= 0.0 { Ok(()) } else { Err(bad(field, format!("{x} is not a finite non-negative number"))) };
        let positive = |field, x: f64| if x.is_finite() && x > 0.0 { Ok(()) } else { Err(bad(field, format!("{x} is not a finite positive number"))) };
        if self.n_nodes < 2 {
            return Err(bad("n_nodes", "at least two nodes are needed"));
        }
        finite_nonneg("duration", self.duration)?;
        finite_nonneg("warmup", self.warmup)?;
        if self.duration > 0.0 && self.warmup >= self.duration {
            return Err(bad("warmup", format!("{} is not below duration {}", self.warmup, self.duration)));
        }
        let (lo, hi) = self.request_interval;
        positive("request_interval", lo)?;
        positive("request_interval", hi)?;
        if lo > hi {
            return Err(bad("request_interval", format!("lower bound {lo} exceeds upper bound {hi}")));
        }
        positive("io_bytes", self.io_bytes)?;
        positive("exec_mean", self.exec_mean)?;
        positive("capacity", self.capacity)?;
        positive("cpu_quantum", self.cpu_quantum)?;
        if !(0.0..=1.0).contains(&self.cpu_flip_prob) {
            return Err(bad("cpu_flip_prob", format!("{} is not a probability", self.cpu_flip_prob)));
        }
        if !(0.0..=1.0).contains(&self.density) {
            return Err(bad("density", format!("{} is not in [0, 1]", self.density)));
        }
        let in_range = |field, n: NodeId| if n.0 < self.n_nodes { Ok(()) } else { Err(bad(field, format!("node {n} out of range"))) };
        for &(n, _) in self.placement.iter().flatten() {
            in_range("placement", n)?;
        }
        for &n in self.seekers.iter().flatten() {
            in_range("seekers", n)?;
        }
        if self.seekers.as_ref().is_some_and(Vec::is_empty) {
            return Err(bad("seekers", "empty list"));
        }
        if self.request_types.as_ref().is_some_and(Vec::is_empty) {
            return Err(bad("request_types", "empty list"));
        }
        Ok(())
    }
}

/// The planner driving one run. `MevRank(j)` follows the j-th best plan
/// of the model instead of the best.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PolicySpec {
    Mev,
    MevRank(usize),
    Afir,
    Ran,
    Ato,
}

impl PolicySpec {
    pub fn kind(self) -> PolicyKind {
        match self {
            PolicySpec::Mev | PolicySpec::MevRank(_) => PolicyKind::Mev,
            PolicySpec::Afir => PolicyKind::Afir,
            PolicySpec::Ran => PolicyKind::Ran,
            PolicySpec::Ato => PolicyKind::Ato,
        }
    }
}

impl TryFrom<PolicyKind> for PolicySpec {
    type Error = SimError;
    fn try_from(k: PolicyKind) -> Result<Self, SimError> {
        match k {
            PolicyKind::Mev => Ok(PolicySpec::Mev),
            PolicyKind::Afir => Ok(PolicySpec::Afir),
            PolicyKind::Ran => Ok(PolicySpec::Ran),
            PolicyKind::Ato => Ok(PolicySpec::Ato),
            PolicyKind::OracleBest => Err(SimError::NotSimulable(k)),
        }
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySpec::MevRank(j) => write!(f, "MEV@{j}"),
            other => f.write_str(other.kind().name()),
        }
    }
}

impl FromStr for PolicySpec {
    type Err = UnknownPolicy;
    fn from_str(s: &str) -> Result<Self, UnknownPolicy> {
        if let Some(rank) = s.strip_prefix("MEV@") {
            return rank.parse().ok().filter(|&j| j >= 1).map(PolicySpec::MevRank).ok_or_else(|| UnknownPolicy(s.to_owned()));
        }
        PolicySpec::try_from(s.parse::<PolicyKind>()?).map_err(|_| UnknownPolicy(s.to_owned()))
    }
}

impl Serialize for PolicySpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PolicySpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
