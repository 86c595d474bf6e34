use std::collections::{BTreeMap, BTreeSet, VecDeque};

use log::{debug, warn};
use rand::seq::{index, IndexedRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::composition::{CompositionPlan, RequestTypes, WeightModel};
use crate::ids::{NodeId, ServiceId};
use crate::knowledge::{ContactKind, KnowledgeBase, LinkSummary, LoadStats, ServiceAdvert, SMOOTHING_ALPHA};
use crate::policies::{select_afir, select_ato, select_mev, select_mev_ranked, select_ran, SelectionContext};
use crate::rng::{substream, substream2};
use crate::trace::ContactInterval;

use super::bandwidth::step_bandwidth_allocation;
use super::config::{PolicySpec, SimConfig, SimError};
use super::cpu::{advance_execution, time_to_finish, CpuContention};
use super::event::{Event, EventKind, EventQueue};
use super::record::{LegRecord, RequestRecord};
use super::time::{SimTime, TICKS_PER_SECOND};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    /// Seeker to first provider.
    Input,
    /// Provider to the provider of the next leg.
    Interleg,
    /// Last provider back to the seeker.
    Output,
}

/// A transfer progressing at a constant rate between two events.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransferSegment {
    pub src: NodeId,
    pub dst: NodeId,
    pub start: SimTime,
    pub end: SimTime,
    pub rate: f64,
    pub purpose: Purpose,
}

/// One execution start, in the order they happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ExecEntry {
    pub provider: NodeId,
    pub request: u64,
    pub leg: usize,
    pub arrive: SimTime,
    pub start: SimTime,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimOutput {
    pub records: Vec<RequestRecord>,
    /// SHA-256 over the processed event stream.
    pub digest: String,
    pub events: u64,
    /// Empty unless `log_transfers` is set.
    pub transfer_log: Vec<TransferSegment>,
    pub exec_log: Vec<ExecEntry>,
}

/// Runs one replication over `trace` and returns every request generated.
/// Requests still in progress at `duration` come back incomplete.
pub fn run(cfg: &SimConfig, trace: &[ContactInterval], policy: PolicySpec, seed: u64) -> Result<SimOutput, SimError> {
    cfg.validate()?;
    let contacts = contact_events(cfg, trace)?;
    let mut sim = Sim::new(cfg, policy, seed, contacts);
    sim.run();
    Ok(sim.finish())
}

/// Contact events in processing order. Intervals closer than one tick are
/// joined so that every pair strictly alternates up and down.
fn contact_events(cfg: &SimConfig, trace: &[ContactInterval]) -> Result<Vec<(SimTime, EventKind)>, SimError> {
    let mut per_pair: BTreeMap<(NodeId, NodeId), Vec<(SimTime, SimTime)>> = BTreeMap::new();
    for (i, c) in trace.iter().enumerate() {
        if c.a == c.b || c.a.0 >= cfg.n_nodes || c.b.0 >= cfg.n_nodes {
            return Err(SimError::Trace(format!("interval {i}: bad node pair {}-{}", c.a, c.b)));
        }
        if !(c.start.is_finite() && c.end.is_finite() && c.start >= 0.0 && c.start < c.end) {
            return Err(SimError::Trace(format!("interval {i}: bad bounds [{}, {}]", c.start, c.end)));
        }
        let (s, e) = (SimTime::from_secs_ceil(c.start), SimTime::from_secs_ceil(c.end));
        if e > s {
            per_pair.entry((c.a.min(c.b), c.a.max(c.b))).or_default().push((s, e));
        }
    }
    let mut events = Vec::new();
    for ((a, b), mut list) in per_pair {
        list.sort();
        let mut cur = list[0];
        for &(s, e) in &list[1..] {
            if s <= cur.1 {
                cur.1 = cur.1.max(e);
            } else {
                events.push((cur.0, EventKind::ContactUp { a, b }));
                events.push((cur.1, EventKind::ContactDown { a, b }));
                cur = (s, e);
            }
        }
        events.push((cur.0, EventKind::ContactUp { a, b }));
        events.push((cur.1, EventKind::ContactDown { a, b }));
    }
    events.sort_by_key(|&(t, k)| {
        let (EventKind::ContactUp { a, b } | EventKind::ContactDown { a, b }) = k else { unreachable!() };
        (t, k.priority(), a, b)
    });
    Ok(events)
}

#[derive(Debug, Clone, Copy)]
struct ExecJob {
    req: usize,
    leg: usize,
}

#[derive(Debug, Clone, Copy)]
struct Running {
    job: ExecJob,
    remaining: f64,
    last: SimTime,
    started: SimTime,
}

/// Arrivals from the same sender within one contact form one batch.
#[derive(Debug, Default)]
struct BatchTracker {
    batches: u64,
    arrivals: f64,
    sum_sq: f64,
    current: Option<(NodeId, u64)>,
    size: f64,
}

impl BatchTracker {
    fn add(&mut self, key: (NodeId, u64)) {
        if self.current == Some(key) {
            self.sum_sq += 2.0 * self.size + 1.0;
            self.size += 1.0;
        } else {
            self.batches += 1;
            self.current = Some(key);
            self.size = 1.0;
            self.sum_sq += 1.0;
        }
        self.arrivals += 1.0;
    }

    fn stats(&self, elapsed: f64) -> LoadStats {
        if self.batches == 0 || !(elapsed > 0.0) {
            return LoadStats::IDLE;
        }
        let b = self.batches as f64;
        LoadStats { lambda: b / elapsed, l: self.arrivals / b, l2: self.sum_sq / b }
    }
}

struct Node {
    kb: KnowledgeBase,
    /// Smoothed wall-clock execution time and its square, per service.
    offered: BTreeMap<ServiceId, (f64, f64)>,
    batches: BatchTracker,
    local_batches: u64,
    queue: VecDeque<ExecJob>,
    running: Option<Running>,
    exec_version: u64,
    cpu: CpuContention,
    /// Current neighbours and when each contact started.
    neighbours: BTreeMap<NodeId, SimTime>,
}

#[derive(Debug)]
struct Transfer {
    src: NodeId,
    dst: NodeId,
    bytes: f64,
    remaining: f64,
    purpose: Purpose,
    req: usize,
    leg: usize,
    enqueued: SimTime,
    started: Option<SimTime>,
    active_secs: f64,
    rate: f64,
    version: u64,
    /// Output bytes queued ahead of this one toward the same seeker.
    kprime_ahead: f64,
}

struct Req {
    rec: RequestRecord,
    plan: Option<CompositionPlan>,
    /// Node holding the data while an AFIR request looks for its next leg.
    holder: NodeId,
    frontier: u8,
    rng: ChaCha8Rng,
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    policy: PolicySpec,
    seed: u64,
    now: SimTime,
    end: SimTime,
    warmup: SimTime,
    nodes: Vec<Node>,
    up: BTreeSet<(NodeId, NodeId)>,
    sessions: BTreeMap<(NodeId, NodeId), u64>,
    transfers: BTreeMap<u64, Transfer>,
    next_transfer: u64,
    link_queues: BTreeMap<(NodeId, NodeId), VecDeque<u64>>,
    active: Vec<u64>,
    bw_last: SimTime,
    reqs: Vec<Req>,
    waiting: Vec<BTreeSet<usize>>,
    queue: EventQueue,
    contacts: Vec<(SimTime, EventKind)>,
    cursor: usize,
    hasher: Sha256,
    events: u64,
    req_rng: ChaCha8Rng,
    cpu_rngs: Vec<ChaCha8Rng>,
    seekers: Vec<NodeId>,
    request_types: Vec<RequestTypes>,
    weights: WeightModel,
    exec_dist: Exp<f64>,
    transfer_log: Vec<TransferSegment>,
    exec_log: Vec<ExecEntry>,
}

fn canonical(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    (a.min(b), a.max(b))
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a SimConfig, policy: PolicySpec, seed: u64, contacts: Vec<(SimTime, EventKind)>) -> Self {
        let n = cfg.n_nodes as usize;
        let mut offered: Vec<BTreeSet<ServiceId>> = vec![BTreeSet::new(); n];
        match &cfg.placement {
            Some(p) => {
                for &(node, s) in p {
                    offered[node.0 as usize].insert(s);
                }
            }
            None => {
                let k = ((cfg.density * n as f64).round() as usize).min(n);
                let mut rng = substream(seed, "services", 0);
                for s in ServiceId::all() {
                    for i in index::sample(&mut rng, n, k) {
                        offered[i].insert(s);
                    }
                }
            }
        }
        let prior = (cfg.exec_mean, 2.0 * cfg.exec_mean * cfg.exec_mean);
        let mut cpu_rngs: Vec<ChaCha8Rng> = (0..n as u64).map(|i| substream(seed, "contention", i)).collect();
        let nodes = offered
            .into_iter()
            .enumerate()
            .map(|(i, services)| Node {
                kb: KnowledgeBase::new(NodeId(i as u32)),
                offered: services.into_iter().map(|s| (s, prior)).collect(),
                batches: BatchTracker::default(),
                local_batches: 0,
                queue: VecDeque::new(),
                running: None,
                exec_version: 0,
                cpu: CpuContention::new(cfg.cpu_max, cfg.cpu_flip_prob, cfg.cpu_quantum, &mut cpu_rngs[i]),
                neighbours: BTreeMap::new(),
            })
            .collect();
        Sim {
            cfg,
            policy,
            seed,
            now: SimTime::ZERO,
            end: SimTime::from_secs_ceil(cfg.duration),
            warmup: SimTime::from_secs_ceil(cfg.warmup),
            nodes,
            up: BTreeSet::new(),
            sessions: BTreeMap::new(),
            transfers: BTreeMap::new(),
            next_transfer: 0,
            link_queues: BTreeMap::new(),
            active: Vec::new(),
            bw_last: SimTime::ZERO,
            reqs: Vec::new(),
            waiting: vec![BTreeSet::new(); n],
            queue: EventQueue::default(),
            contacts,
            cursor: 0,
            hasher: Sha256::new(),
            events: 0,
            req_rng: substream(seed, "requests", 0),
            cpu_rngs,
            seekers: cfg.seekers.clone().unwrap_or_else(|| (0..cfg.n_nodes).map(NodeId).collect()),
            request_types: cfg.request_types.clone().unwrap_or_else(|| RequestTypes::all().collect()),
            weights: WeightModel { input_bytes: cfg.io_bytes, output_bytes: cfg.io_bytes, default_throughput: cfg.capacity },
            exec_dist: Exp::new(1.0 / cfg.exec_mean).expect("validated mean"),
            transfer_log: Vec::new(),
            exec_log: Vec::new(),
        }
    }

    fn node(&mut self, id: NodeId) -> &mut Node {
        &mut self.nodes[id.0 as usize]
    }

    fn run(&mut self) {
        for i in 0..self.nodes.len() {
            if let Some(d) = self.nodes[i].cpu.next_flip_delay(&mut self.cpu_rngs[i]) {
                self.queue.push(delay_ticks(d), EventKind::CpuFlip { node: NodeId(i as u32) });
            }
        }
        let first = self.warmup + SimTime::from_secs_ceil(self.gap());
        if first < self.end {
            self.queue.push(first, EventKind::RequestGen);
        }
        loop {
            let from_trace = match (self.contacts.get(self.cursor), self.queue.peek_key()) {
                (None, None) => break,
                (Some(_), None) => true,
                (None, Some(_)) => false,
                (Some(&(t, k)), Some(h)) => (t, k.priority()) <= h,
            };
            let ev = if from_trace {
                self.cursor += 1;
                let (time, kind) = self.contacts[self.cursor - 1];
                Event { time, kind }
            } else {
                self.queue.pop().expect("peeked")
            };
            if ev.time > self.end {
                break;
            }
            debug_assert!(ev.time >= self.now);
            self.now = ev.time;
            if self.dispatch(ev.kind) {
                self.hasher.update(ev.time.0.to_le_bytes());
                self.hasher.update(ev.kind.encode());
                self.events += 1;
            }
        }
        self.advance_transfers();
    }

    fn finish(self) -> SimOutput {
        SimOutput {
            records: self.reqs.into_iter().map(|r| r.rec).collect(),
            digest: format!("{:x}", self.hasher.finalize()),
            events: self.events,
            transfer_log: self.transfer_log,
            exec_log: self.exec_log,
        }
    }

    fn gap(&mut self) -> f64 {
        let (lo, hi) = self.cfg.request_interval;
        self.req_rng.random_range(lo..=hi)
    }

    /// Returns false for superseded events.
    fn dispatch(&mut self, kind: EventKind) -> bool {
        match kind {
            EventKind::ContactUp { a, b } => self.contact_up(a, b),
            EventKind::ContactDown { a, b } => self.contact_down(a, b),
            EventKind::StatsExchange { a, b } => return self.exchange(a, b),
            EventKind::TransferComplete { transfer, version } => return self.transfer_complete(transfer, version),
            EventKind::ExecComplete { node, version } => return self.exec_complete(node, version),
            EventKind::CpuFlip { node } => self.cpu_flip(node),
            EventKind::RequestGen => self.generate(),
        }
        true
    }

    fn record_contact(&mut self, a: NodeId, b: NodeId, kind: ContactKind) {
        let t = self.now.secs();
        for (x, y) in [(a, b), (b, a)] {
            if let Err(e) = self.node(x).kb.record_contact_event(y, kind, t) {
                warn!("node {x}: {e}");
            }
        }
    }

    fn contact_up(&mut self, a: NodeId, b: NodeId) {
        self.up.insert((a, b));
        *self.sessions.entry((a, b)).or_default() += 1;
        let now = self.now;
        self.node(a).neighbours.insert(b, now);
        self.node(b).neighbours.insert(a, now);
        self.record_contact(a, b, ContactKind::Up);
        self.queue.push(now, EventKind::StatsExchange { a, b });
        self.reallocate();
    }

    fn contact_down(&mut self, a: NodeId, b: NodeId) {
        self.advance_transfers();
        self.up.remove(&(a, b));
        self.node(a).neighbours.remove(&b);
        self.node(b).neighbours.remove(&a);
        self.record_contact(a, b, ContactKind::Down);
        // Transfers whose last byte went through at this very tick.
        let done: Vec<u64> = self
            .active
            .iter()
            .copied()
            .filter(|id| {
                let t = &self.transfers[id];
                canonical(t.src, t.dst) == (a, b) && t.remaining <= 1e-9 * t.bytes
            })
            .collect();
        for id in done {
            self.finish_transfer(id);
        }
        self.reallocate();
    }

    fn advert(&self, x: NodeId) -> (Vec<ServiceAdvert>, LoadStats, Vec<(NodeId, LinkSummary)>) {
        let node = &self.nodes[x.0 as usize];
        let services = node.offered.iter().map(|(&service_id, &(d, d2))| ServiceAdvert { service_id, d, d2 }).collect();
        let load = node.batches.stats(self.now.since(self.warmup).secs());
        (services, load, node.kb.link_summaries(self.cfg.capacity))
    }

    fn exchange(&mut self, a: NodeId, b: NodeId) -> bool {
        if !self.up.contains(&(a, b)) {
            return false;
        }
        let (ad_a, ad_b) = (self.advert(a), self.advert(b));
        for (x, (services, load, links), from) in [(b, ad_a, a), (a, ad_b, b)] {
            let kb = &mut self.node(x).kb;
            if let Err(e) = kb.merge_peer_advertisement(from, &services, load) {
                warn!("node {x}: {e}");
            }
            if let Err(e) = kb.merge_link_advertisement(from, &links) {
                warn!("node {x}: {e}");
            }
        }
        for x in [a, b] {
            let ids: Vec<usize> = self.waiting[x.0 as usize].iter().copied().collect();
            for id in ids {
                if self.waiting[x.0 as usize].contains(&id) {
                    self.step_request(id);
                }
            }
        }
        true
    }

    fn generate(&mut self) {
        let seeker = *self.seekers.choose(&mut self.req_rng).expect("validated seekers");
        let request = *self.request_types.choose(&mut self.req_rng).expect("validated types");
        let id = self.reqs.len();
        self.reqs.push(Req {
            rec: RequestRecord {
                id: id as u64,
                seeker,
                request,
                policy: self.policy,
                gen_time: self.now,
                commit_time: None,
                legs: Vec::new(),
                completion_time: None,
                estimate_at_commit: None,
                plan_changes: 0,
                rank_exact: true,
            },
            plan: None,
            holder: seeker,
            frontier: request.input(),
            rng: substream(self.seed, "policy", id as u64),
        });
        self.waiting[seeker.0 as usize].insert(id);
        self.step_request(id);
        let next = self.now + SimTime::from_secs_ceil(self.gap());
        if next < self.end {
            self.queue.push(next, EventKind::RequestGen);
        }
    }

    /// Lets the policy act on a request that is still being planned.
    fn step_request(&mut self, id: usize) {
        match self.policy {
            PolicySpec::Afir => self.step_afir(id),
            PolicySpec::Mev | PolicySpec::MevRank(_) => {
                let new = self.select(id);
                let r = &mut self.reqs[id];
                if let (Some(old), Some(new)) = (&r.plan, &new) {
                    if old.legs != new.legs {
                        r.rec.plan_changes += 1;
                    }
                }
                r.plan = new;
                self.try_commit(id);
            }
            PolicySpec::Ran | PolicySpec::Ato => {
                if self.reqs[id].plan.is_none() {
                    self.reqs[id].plan = self.select(id);
                }
                self.try_commit(id);
            }
        }
    }

    fn select(&mut self, id: usize) -> Option<CompositionPlan> {
        let r = &mut self.reqs[id];
        let node = &self.nodes[r.rec.seeker.0 as usize];
        let contacts: BTreeSet<NodeId> = node.neighbours.keys().copied().collect();
        let ctx = SelectionContext { kb: &node.kb, request: r.rec.request, contacts: &contacts, weights: self.weights };
        let chosen = match self.policy {
            PolicySpec::Mev => select_mev(&ctx),
            PolicySpec::MevRank(j) => select_mev_ranked(&ctx, j).map(|(p, exact)| {
                r.rec.rank_exact = exact;
                p
            }),
            PolicySpec::Ran => select_ran(&ctx, &mut r.rng),
            PolicySpec::Ato => select_ato(&ctx, &mut r.rng),
            PolicySpec::Afir => unreachable!("AFIR plans leg by leg"),
        };
        match chosen {
            Ok(p) => Some(p),
            Err(e) => {
                debug!("request {id} parked: {e}");
                None
            }
        }
    }

    /// Commits once the first provider of the tentative plan is in reach.
    fn try_commit(&mut self, id: usize) {
        let r = &self.reqs[id];
        let seeker = r.rec.seeker;
        let Some(plan) = &r.plan else { return };
        let first = plan.legs[0].1;
        if !self.nodes[seeker.0 as usize].neighbours.contains_key(&first) {
            return;
        }
        let r = &mut self.reqs[id];
        let plan = r.plan.take().expect("checked");
        r.rec.commit_time = Some(self.now);
        r.rec.estimate_at_commit = Some(plan.estimated_total);
        r.rec.legs = plan.legs.iter().map(|&(s, p)| LegRecord::new(s, p)).collect();
        self.waiting[seeker.0 as usize].remove(&id);
        self.enqueue_transfer(seeker, first, Purpose::Input, id, 0);
    }

    /// Binds the next leg to the longest-standing neighbour of the holder
    /// that moves the request forward.
    fn step_afir(&mut self, id: usize) {
        let r = &self.reqs[id];
        let holder = r.holder;
        let node = &self.nodes[holder.0 as usize];
        let mut order: Vec<(SimTime, NodeId)> = node.neighbours.iter().map(|(&q, &t)| (t, q)).collect();
        order.sort();
        let found = order
            .into_iter()
            .find_map(|(_, q)| select_afir(&node.kb, r.rec.request, r.frontier, q, r.rec.seeker).map(|s| (s, q)));
        let Some((service, provider)) = found else { return };
        let r = &mut self.reqs[id];
        let leg = r.rec.legs.len();
        r.rec.legs.push(LegRecord::new(service, provider));
        let purpose = if leg == 0 {
            r.rec.commit_time = Some(self.now);
            Purpose::Input
        } else {
            Purpose::Interleg
        };
        self.waiting[holder.0 as usize].remove(&id);
        self.enqueue_transfer(holder, provider, purpose, id, leg);
    }

    fn queued_bytes(&self, src: NodeId, dst: NodeId) -> f64 {
        self.link_queues.get(&(src, dst)).map_or(0.0, |q| q.iter().map(|id| self.transfers[id].remaining.max(0.0)).sum())
    }

    fn update_k_queue(&mut self, src: NodeId, dst: NodeId) {
        let bytes = self.queued_bytes(src, dst);
        if let Err(e) = self.node(src).kb.set_k_queue(dst, bytes) {
            warn!("node {src}: {e}");
        }
    }

    /// Queues data behind whatever is already waiting between the pair.
    fn enqueue_transfer(&mut self, src: NodeId, dst: NodeId, purpose: Purpose, req: usize, leg: usize) {
        let kprime_ahead = if purpose == Purpose::Output { self.queued_bytes(src, dst) } else { 0.0 };
        let id = self.next_transfer;
        self.next_transfer += 1;
        let bytes = self.cfg.io_bytes;
        self.transfers.insert(
            id,
            Transfer {
                src,
                dst,
                bytes,
                remaining: bytes,
                purpose,
                req,
                leg,
                enqueued: self.now,
                started: None,
                active_secs: 0.0,
                rate: 0.0,
                version: 0,
                kprime_ahead,
            },
        );
        self.link_queues.entry((src, dst)).or_default().push_back(id);
        self.update_k_queue(src, dst);
        self.reallocate();
    }

    fn advance_transfers(&mut self) {
        let dt = self.now.since(self.bw_last);
        if dt > SimTime::ZERO {
            let secs = dt.secs();
            for id in &self.active {
                let Some(t) = self.transfers.get_mut(id) else { continue };
                if t.rate > 0.0 {
                    t.remaining -= t.rate * secs;
                    t.active_secs += secs;
                    if self.cfg.log_transfers {
                        self.transfer_log.push(TransferSegment {
                            src: t.src,
                            dst: t.dst,
                            start: self.bw_last,
                            end: self.now,
                            rate: t.rate,
                            purpose: t.purpose,
                        });
                    }
                }
            }
        }
        self.bw_last = self.now;
    }

    /// Brings transfer progress up to now and recomputes every rate.
    fn reallocate(&mut self) {
        self.advance_transfers();
        let heads: Vec<u64> = self
            .link_queues
            .iter()
            .filter(|(&(s, d), _)| self.up.contains(&canonical(s, d)))
            .filter_map(|(_, q)| q.front().copied())
            .collect();
        let pairs: Vec<(NodeId, NodeId)> = heads.iter().map(|id| (self.transfers[id].src, self.transfers[id].dst)).collect();
        let rates = step_bandwidth_allocation(&pairs, self.cfg.capacity);
        let keep: BTreeSet<u64> = heads.iter().copied().collect();
        for id in std::mem::take(&mut self.active) {
            if !keep.contains(&id) {
                if let Some(t) = self.transfers.get_mut(&id) {
                    t.rate = 0.0;
                    t.version += 1;
                }
            }
        }
        for (&id, rate) in heads.iter().zip(rates) {
            let t = self.transfers.get_mut(&id).expect("queued transfer");
            if t.started.is_none() {
                t.started = Some(self.now);
                if t.purpose != Purpose::Input {
                    let (src, dst, tq) = (t.src, t.dst, self.now.since(t.enqueued).secs());
                    for (x, y) in [(src, dst), (dst, src)] {
                        if let Err(e) = self.nodes[x.0 as usize].kb.record_tq_sample(y, tq) {
                            warn!("node {x}: {e}");
                        }
                    }
                }
            }
            let t = self.transfers.get_mut(&id).expect("queued transfer");
            if t.rate != rate {
                t.rate = rate;
                t.version += 1;
                let at = self.now + SimTime::from_secs_ceil(t.remaining.max(0.0) / rate);
                self.queue.push(at, EventKind::TransferComplete { transfer: id, version: t.version });
            }
        }
        self.active = heads;
    }

    fn transfer_complete(&mut self, id: u64, version: u64) -> bool {
        match self.transfers.get(&id) {
            Some(t) if t.version == version && t.rate > 0.0 => {}
            _ => return false,
        }
        self.advance_transfers();
        self.finish_transfer(id);
        self.reallocate();
        true
    }

    fn finish_transfer(&mut self, id: u64) {
        let t = self.transfers.remove(&id).expect("live transfer");
        let q = self.link_queues.get_mut(&(t.src, t.dst)).expect("transfer queue");
        debug_assert_eq!(q.front(), Some(&id));
        q.pop_front();
        if q.is_empty() {
            self.link_queues.remove(&(t.src, t.dst));
        }
        self.active.retain(|&x| x != id);
        if t.active_secs > 0.0 {
            for (x, y) in [(t.src, t.dst), (t.dst, t.src)] {
                if let Err(e) = self.nodes[x.0 as usize].kb.record_throughput_sample(y, t.bytes, t.active_secs) {
                    warn!("node {x}: {e}");
                }
            }
        }
        self.update_k_queue(t.src, t.dst);
        match t.purpose {
            Purpose::Input | Purpose::Interleg => {
                self.reqs[t.req].rec.legs[t.leg].arrive = Some(self.now);
                let session = self.sessions.get(&canonical(t.src, t.dst)).copied().unwrap_or(0);
                let node = self.node(t.dst);
                node.batches.add((t.src, session));
                node.queue.push_back(ExecJob { req: t.req, leg: t.leg });
                self.try_start_exec(t.dst);
            }
            Purpose::Output => {
                self.reqs[t.req].rec.completion_time = Some(self.now);
                if let Err(e) = self.node(t.dst).kb.record_kprime_queue_sample(t.src, t.kprime_ahead) {
                    warn!("node {}: {e}", t.dst);
                }
            }
        }
    }

    fn try_start_exec(&mut self, p: NodeId) {
        let now = self.now;
        let node = &mut self.nodes[p.0 as usize];
        if node.running.is_some() {
            return;
        }
        let Some(job) = node.queue.pop_front() else { return };
        let leg = &mut self.reqs[job.req].rec.legs[job.leg];
        leg.exec_start = Some(now);
        self.exec_log.push(ExecEntry {
            provider: p,
            request: job.req as u64,
            leg: job.leg,
            arrive: leg.arrive.expect("arrived before execution"),
            start: now,
        });
        let work = self.exec_dist.sample(&mut substream2(self.seed, "exec", job.req as u64, job.leg as u64));
        node.running = Some(Running { job, remaining: work, last: now, started: now });
        self.schedule_exec(p);
    }

    fn schedule_exec(&mut self, p: NodeId) {
        let now = self.now;
        let node = self.node(p);
        let run = node.running.expect("running job");
        node.exec_version += 1;
        let version = node.exec_version;
        let at = now + SimTime::from_secs_ceil(time_to_finish(run.remaining, node.cpu.level()));
        self.queue.push(at, EventKind::ExecComplete { node: p, version });
    }

    fn exec_complete(&mut self, p: NodeId, version: u64) -> bool {
        let now = self.now;
        let node = self.node(p);
        if node.exec_version != version || node.running.is_none() {
            return false;
        }
        let run = node.running.take().expect("checked");
        let wall = now.since(run.started).secs();
        let ExecJob { req, leg } = run.job;
        let service = self.reqs[req].rec.legs[leg].service;
        let node = self.node(p);
        if let Some((d, d2)) = node.offered.get_mut(&service) {
            *d += SMOOTHING_ALPHA * (wall - *d);
            *d2 += SMOOTHING_ALPHA * (wall * wall - *d2);
        }
        self.reqs[req].rec.legs[leg].exec_end = Some(now);
        self.dispatch_leg_output(p, req, leg);
        self.try_start_exec(p);
        true
    }

    /// Sends the output of a finished leg to whoever needs it next.
    fn dispatch_leg_output(&mut self, p: NodeId, req: usize, leg: usize) {
        let r = &mut self.reqs[req];
        let service = r.rec.legs[leg].service;
        if service.output() == r.rec.request.output() {
            let seeker = r.rec.seeker;
            self.enqueue_transfer(p, seeker, Purpose::Output, req, leg);
            return;
        }
        if self.policy == PolicySpec::Afir {
            r.holder = p;
            r.frontier = service.output();
            self.waiting[p.0 as usize].insert(req);
            self.step_afir(req);
            return;
        }
        let next = r.rec.legs[leg + 1].provider;
        if next == p {
            r.rec.legs[leg + 1].arrive = Some(self.now);
            let node = self.node(p);
            node.local_batches += 1;
            let key = (p, u64::MAX - node.local_batches);
            node.batches.add(key);
            node.queue.push_back(ExecJob { req, leg: leg + 1 });
        } else {
            self.enqueue_transfer(p, next, Purpose::Interleg, req, leg + 1);
        }
    }

    fn cpu_flip(&mut self, p: NodeId) {
        let now = self.now;
        let i = p.0 as usize;
        let node = &mut self.nodes[i];
        let level = node.cpu.level();
        if let Some(run) = &mut node.running {
            run.remaining = advance_execution(run.remaining, now.since(run.last).secs(), level);
            run.last = now;
        }
        node.cpu.flip(&mut self.cpu_rngs[i]);
        let changed = node.cpu.level() != level;
        if changed && node.running.is_some() {
            self.schedule_exec(p);
        }
        if let Some(d) = self.nodes[i].cpu.next_flip_delay(&mut self.cpu_rngs[i]) {
            self.queue.push(now + delay_ticks(d), EventKind::CpuFlip { node: p });
        }
    }
}

/// Whole quanta expressed in ticks, rounded to absorb binary fractions.
fn delay_ticks(secs: f64) -> SimTime {
    SimTime((secs * TICKS_PER_SECOND as f64).round() as u64)
}
