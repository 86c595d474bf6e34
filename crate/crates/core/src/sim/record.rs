use serde::Serialize;

use crate::composition::{describe_legs, RequestTypes};
use crate::ids::{NodeId, ServiceId};

use super::config::PolicySpec;
use super::time::SimTime;

/// Timestamps of one leg of a composition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LegRecord {
    pub service: ServiceId,
    pub provider: NodeId,
    /// Input data fully received by the provider.
    pub arrive: Option<SimTime>,
    pub exec_start: Option<SimTime>,
    pub exec_end: Option<SimTime>,
}

impl LegRecord {
    pub fn new(service: ServiceId, provider: NodeId) -> Self {
        LegRecord { service, provider, arrive: None, exec_start: None, exec_end: None }
    }
}

/// Durations between consecutive lifecycle timestamps of a completed
/// request. They add up exactly to the provisioning time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Phases {
    /// Generation until the input transfer is queued.
    pub wait: SimTime,
    /// Queued input until fully received by the first provider.
    pub input: SimTime,
    pub legs: Vec<LegPhases>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LegPhases {
    pub queue: SimTime,
    pub exec: SimTime,
    /// Until the next provider (or the seeker, on the last leg) holds the
    /// output.
    pub transfer: SimTime,
}

impl Phases {
    pub fn total(&self) -> SimTime {
        self.legs.iter().fold(self.wait + self.input, |acc, l| acc + l.queue + l.exec + l.transfer)
    }
}

/// Lifecycle of one request.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RequestRecord {
    pub id: u64,
    pub seeker: NodeId,
    pub request: RequestTypes,
    pub policy: PolicySpec,
    pub gen_time: SimTime,
    /// When the plan (or the first AFIR leg) was fixed and the input queued.
    pub commit_time: Option<SimTime>,
    pub legs: Vec<LegRecord>,
    pub completion_time: Option<SimTime>,
    /// Model estimate of the committed plan from the commit instant.
    pub estimate_at_commit: Option<f64>,
    /// How often the tentative plan changed before the commit.
    pub plan_changes: u32,
    /// False when a ranked run had fewer plans than its rank and fell
    /// back to the best one.
    pub rank_exact: bool,
}

impl RequestRecord {
    pub fn is_complete(&self) -> bool {
        self.completion_time.is_some()
    }

    pub fn provisioning_time(&self) -> Option<SimTime> {
        self.completion_time.map(|c| c - self.gen_time)
    }

    /// Model estimate of the provisioning time: the estimated remainder at
    /// commit plus the time already spent waiting.
    pub fn estimated_provisioning_time(&self) -> Option<f64> {
        Some(self.estimate_at_commit? + (self.commit_time? - self.gen_time).secs())
    }

    pub fn plan(&self) -> String {
        let legs: Vec<_> = self.legs.iter().map(|l| (l.service, l.provider)).collect();
        describe_legs(&legs)
    }

    /// `None` until the request completes.
    pub fn phases(&self) -> Option<Phases> {
        let done = self.completion_time?;
        let commit = self.commit_time?;
        let first = self.legs.first()?.arrive?;
        let mut legs = Vec::with_capacity(self.legs.len());
        for (j, l) in self.legs.iter().enumerate() {
            let (arrive, start, end) = (l.arrive?, l.exec_start?, l.exec_end?);
            let next = match self.legs.get(j + 1) {
                Some(n) => n.arrive?,
                None => done,
            };
            legs.push(LegPhases { queue: start - arrive, exec: end - start, transfer: next - end });
        }
        Some(Phases { wait: commit - self.gen_time, input: first - commit, legs })
    }
}
