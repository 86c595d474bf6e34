//! Per-node knowledge base: what a node has measured about the peers it met
//! and what those peers have told it about their services.

use std::collections::BTreeMap;

use log::warn;
use serde::Serialize;
use thiserror::Error;

use crate::ids::{NodeId, ServiceId};

/// Weight given to a new sample by the exponential smoothers.
/// Handoffs observed before the smoothed TQ is trusted for planning.
pub const TQ_MIN_SAMPLES: u64 = 8;

pub const SMOOTHING_ALPHA: f64 = 0.125;

#[derive(Debug, Error, PartialEq)]
pub enum KnowledgeError {
    #[error("contact event for peer {peer} at {t}s out of order: {reason}")]
    ProtocolViolation { peer: NodeId, t: f64, reason: &'static str },
    #[error("non-positive duration {0}s")]
    NonPositiveDuration(f64),
    #[error("invalid sample {0}")]
    InvalidSample(f64),
    #[error("invalid load statistics from {peer}: lambda={lambda}, l={l}, l2={l2}")]
    InvalidLoad { peer: NodeId, lambda: f64, l: f64, l2: f64 },
    #[error("a node keeps no statistics about itself")]
    SelfPeer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContactKind {
    Up,
    Down,
}

/// Arithmetic mean of all folded samples, with their range.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct RunningMean {
    sum: f64,
    count: u64,
    min: f64,
    max: f64,
}

impl RunningMean {
    pub fn push(&mut self, x: f64) {
        if self.count == 0 {
            self.min = x;
            self.max = x;
        } else {
            self.min = self.min.min(x);
            self.max = self.max.max(x);
        }
        self.sum += x;
        self.count += 1;
    }

    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn range(&self) -> Option<(f64, f64)> {
        (self.count > 0).then_some((self.min, self.max))
    }
}

/// Exponentially smoothed average. The first sample initialises the value.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Smoothed {
    value: Option<f64>,
    count: u64,
    min: f64,
    max: f64,
}

impl Smoothed {
    pub fn push(&mut self, x: f64) {
        self.value = Some(match self.value {
            None => x,
            Some(v) => (1.0 - SMOOTHING_ALPHA) * v + SMOOTHING_ALPHA * x,
        });
        if self.count == 0 {
            self.min = x;
            self.max = x;
        } else {
            self.min = self.min.min(x);
            self.max = self.max.max(x);
        }
        self.count += 1;
    }

    pub fn value(&self) -> Option<f64> {
        self.value
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn range(&self) -> Option<(f64, f64)> {
        (self.count > 0).then_some((self.min, self.max))
    }
}

/// Number of samples behind each estimate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SampleCounts {
    pub contacts: u64,
    pub intercontacts: u64,
    pub throughput: u64,
    pub kprime_queue: u64,
    pub tq: u64,
}

/// What a node has observed about one peer.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PeerStats {
    contact: RunningMean,
    intercontact: RunningMean,
    throughput: Smoothed,
    kprime_queue: Smoothed,
    tq: Smoothed,
    /// Bytes currently queued toward the peer.
    pub k_queue: f64,
    pub in_contact: bool,
    last_event: Option<(ContactKind, f64)>,
    /// Start time of the current contact, if in contact.
    contact_since: Option<f64>,
}

impl PeerStats {
    /// Contact-time rate δ; `None` until a contact has completed.
    pub fn delta(&self) -> Option<f64> {
        self.contact.mean().map(|m| 1.0 / m)
    }

    /// Inter-contact rate δ′; `None` until an inter-contact has completed.
    pub fn delta_prime(&self) -> Option<f64> {
        self.intercontact.mean().map(|m| 1.0 / m)
    }

    pub fn throughput(&self) -> Option<f64> {
        self.throughput.value()
    }

    pub fn kprime_queue_avg(&self) -> Option<f64> {
        self.kprime_queue.value()
    }

    /// Smoothed TQ, once at least [`TQ_MIN_SAMPLES`] transfers have been
    /// observed.
    pub fn tq(&self) -> Option<f64> {
        self.tq.value().filter(|_| self.tq.count() >= TQ_MIN_SAMPLES)
    }

    pub fn contact_since(&self) -> Option<f64> {
        self.contact_since
    }

    pub fn contact_durations(&self) -> &RunningMean {
        &self.contact
    }

    pub fn intercontact_durations(&self) -> &RunningMean {
        &self.intercontact
    }

    pub fn throughput_estimator(&self) -> &Smoothed {
        &self.throughput
    }

    pub fn tq_estimator(&self) -> &Smoothed {
        &self.tq
    }

    /// Usable for planning once both a contact and an inter-contact have
    /// completed, so that δ and δ′ are both defined and positive.
    pub fn is_usable(&self) -> bool {
        matches!((self.delta(), self.delta_prime()), (Some(d), Some(dp)) if d > 0.0 && dp > 0.0 && d.is_finite() && dp.is_finite())
    }

    pub fn sample_counts(&self) -> SampleCounts {
        SampleCounts {
            contacts: self.contact.count(),
            intercontacts: self.intercontact.count(),
            throughput: self.throughput.count(),
            kprime_queue: self.kprime_queue.count(),
            tq: self.tq.count(),
        }
    }
}

/// Execution-time and load statistics of one service at one provider.
///
/// `l2` is the raw second moment E[L²] of the batch size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProviderServiceStats {
    pub service_id: ServiceId,
    pub d: f64,
    pub d2: f64,
    pub lambda: f64,
    pub l: f64,
    pub l2: f64,
}

/// Load statistics a provider advertises for its task queue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LoadStats {
    pub lambda: f64,
    pub l: f64,
    pub l2: f64,
}

impl LoadStats {
    /// No batches seen yet: a single-task batch arriving at rate zero.
    pub const IDLE: LoadStats = LoadStats { lambda: 0.0, l: 1.0, l2: 1.0 };

    fn is_valid(&self) -> bool {
        let finite = self.lambda.is_finite() && self.l.is_finite() && self.l2.is_finite();
        finite && self.lambda >= 0.0 && self.l >= 0.0 && self.l2 >= 0.0 && self.l2 >= self.l * self.l * (1.0 - 1e-12)
    }
}

/// Advertised execution-time moments of one service.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ServiceAdvert {
    pub service_id: ServiceId,
    pub d: f64,
    pub d2: f64,
}

impl ServiceAdvert {
    fn is_consistent(&self) -> bool {
        self.d.is_finite() && self.d2.is_finite() && self.d > 0.0 && self.d2 >= self.d * self.d * (1.0 - 1e-12)
    }
}

/// First-hand link statistics a node reports about one of its own peers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinkSummary {
    pub delta: f64,
    pub delta_prime: f64,
    pub throughput: f64,
    pub tq: Option<f64>,
}

/// Entries accepted and rejected by a merge.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MergeReport {
    pub accepted: usize,
    pub rejected: Vec<ServiceId>,
}

/// Everything one node knows.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeBase {
    self_id: NodeId,
    peers: BTreeMap<NodeId, PeerStats>,
    services: BTreeMap<(NodeId, ServiceId), ProviderServiceStats>,
    /// Link statistics reported by peers, keyed by (reporter, other end).
    links: BTreeMap<(NodeId, NodeId), LinkSummary>,
}

impl KnowledgeBase {
    pub fn new(self_id: NodeId) -> Self {
        KnowledgeBase { self_id, peers: BTreeMap::new(), services: BTreeMap::new(), links: BTreeMap::new() }
    }

    pub fn self_id(&self) -> NodeId {
        self.self_id
    }

    pub fn peer(&self, peer: NodeId) -> Option<&PeerStats> {
        self.peers.get(&peer)
    }

    pub fn peers(&self) -> impl Iterator<Item = (NodeId, &PeerStats)> {
        self.peers.iter().map(|(&id, s)| (id, s))
    }

    fn peer_mut(&mut self, peer: NodeId) -> Result<&mut PeerStats, KnowledgeError> {
        if peer == self.self_id {
            return Err(KnowledgeError::SelfPeer);
        }
        Ok(self.peers.entry(peer).or_default())
    }

    pub fn record_contact_event(&mut self, peer: NodeId, kind: ContactKind, t: f64) -> Result<(), KnowledgeError> {
        let stats = self.peer_mut(peer)?;
        let violation = |reason| Err(KnowledgeError::ProtocolViolation { peer, t, reason });
        if !t.is_finite() {
            return violation("non-finite time");
        }
        match (stats.last_event, kind) {
            (None, ContactKind::Down) => return violation("first event must be up"),
            (Some((ContactKind::Up, _)), ContactKind::Up) | (Some((ContactKind::Down, _)), ContactKind::Down) => {
                return violation("events must alternate")
            }
            (Some((_, last)), _) if t <= last => return violation("time must increase"),
            _ => {}
        }
        match (stats.last_event, kind) {
            (Some((ContactKind::Down, last)), ContactKind::Up) => stats.intercontact.push(t - last),
            (Some((ContactKind::Up, last)), ContactKind::Down) => stats.contact.push(t - last),
            _ => {}
        }
        stats.in_contact = kind == ContactKind::Up;
        stats.contact_since = stats.in_contact.then_some(t);
        stats.last_event = Some((kind, t));
        Ok(())
    }

    pub fn record_throughput_sample(&mut self, peer: NodeId, bytes: f64, duration: f64) -> Result<(), KnowledgeError> {
        if !(duration > 0.0) || !duration.is_finite() {
            return Err(KnowledgeError::NonPositiveDuration(duration));
        }
        if !(bytes >= 0.0) || !bytes.is_finite() {
            return Err(KnowledgeError::InvalidSample(bytes));
        }
        self.peer_mut(peer)?.throughput.push(bytes / duration);
        Ok(())
    }

    pub fn record_tq_sample(&mut self, peer: NodeId, seconds: f64) -> Result<(), KnowledgeError> {
        if !(seconds >= 0.0) || !seconds.is_finite() {
            return Err(KnowledgeError::InvalidSample(seconds));
        }
        self.peer_mut(peer)?.tq.push(seconds);
        Ok(())
    }

    pub fn record_kprime_queue_sample(&mut self, peer: NodeId, bytes: f64) -> Result<(), KnowledgeError> {
        if !(bytes >= 0.0) || !bytes.is_finite() {
            return Err(KnowledgeError::InvalidSample(bytes));
        }
        self.peer_mut(peer)?.kprime_queue.push(bytes);
        Ok(())
    }

    pub fn set_k_queue(&mut self, peer: NodeId, bytes: f64) -> Result<(), KnowledgeError> {
        if !(bytes >= 0.0) || !bytes.is_finite() {
            return Err(KnowledgeError::InvalidSample(bytes));
        }
        self.peer_mut(peer)?.k_queue = bytes;
        Ok(())
    }

    /// Replaces the peer's service catalog and load statistics.
    ///
    /// Entries with inconsistent moments are skipped; invalid load
    /// statistics reject the whole advertisement.
    pub fn merge_peer_advertisement(
        &mut self,
        peer: NodeId,
        services: &[ServiceAdvert],
        load: LoadStats,
    ) -> Result<MergeReport, KnowledgeError> {
        if !load.is_valid() {
            return Err(KnowledgeError::InvalidLoad { peer, lambda: load.lambda, l: load.l, l2: load.l2 });
        }
        self.peer_mut(peer)?;
        let stale: Vec<_> = self.services.range((peer, ServiceId::MIN)..=(peer, ServiceId::MAX)).map(|(k, _)| *k).collect();
        for k in stale {
            self.services.remove(&k);
        }
        let mut report = MergeReport::default();
        for s in services {
            if s.is_consistent() {
                self.services.insert(
                    (peer, s.service_id),
                    ProviderServiceStats { service_id: s.service_id, d: s.d, d2: s.d2, lambda: load.lambda, l: load.l, l2: load.l2 },
                );
                report.accepted += 1;
            } else {
                warn!("skipping service {} from {peer}: d={} d2={}", s.service_id, s.d, s.d2);
                report.rejected.push(s.service_id);
            }
        }
        Ok(report)
    }

    /// Replaces everything `peer` has reported about its own links.
    pub fn merge_link_advertisement(&mut self, peer: NodeId, links: &[(NodeId, LinkSummary)]) -> Result<(), KnowledgeError> {
        self.peer_mut(peer)?;
        let stale: Vec<_> = self.links.range((peer, NodeId(0))..=(peer, NodeId(u32::MAX))).map(|(k, _)| *k).collect();
        for k in stale {
            self.links.remove(&k);
        }
        for &(other, summary) in links {
            if other != peer {
                self.links.insert((peer, other), summary);
            }
        }
        Ok(())
    }

    /// Link statistics reported by `reporter` about its link to `other`.
    pub fn reported_link(&self, reporter: NodeId, other: NodeId) -> Option<&LinkSummary> {
        self.links.get(&(reporter, other))
    }

    /// Usable first-hand link statistics, for advertising to others.
    /// Throughput falls back to `default_throughput` before any sample.
    pub fn link_summaries(&self, default_throughput: f64) -> Vec<(NodeId, LinkSummary)> {
        self.peers
            .iter()
            .filter(|(_, s)| s.is_usable())
            .map(|(&id, s)| {
                (
                    id,
                    LinkSummary {
                        delta: s.delta().unwrap_or(f64::NAN),
                        delta_prime: s.delta_prime().unwrap_or(f64::NAN),
                        throughput: s.throughput().unwrap_or(default_throughput),
                        tq: s.tq(),
                    },
                )
            })
            .collect()
    }

    pub fn service(&self, provider: NodeId, service: ServiceId) -> Option<&ProviderServiceStats> {
        self.services.get(&(provider, service))
    }

    /// Every known (provider, service) entry in key order.
    pub fn services(&self) -> impl Iterator<Item = (NodeId, &ProviderServiceStats)> {
        self.services.iter().map(|(&(p, _), s)| (p, s))
    }

    pub fn services_of(&self, provider: NodeId) -> impl Iterator<Item = &ProviderServiceStats> {
        self.services.range((provider, ServiceId::MIN)..=(provider, ServiceId::MAX)).map(|(_, s)| s)
    }
}
