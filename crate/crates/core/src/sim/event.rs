use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::ids::NodeId;

use super::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    ContactDown { a: NodeId, b: NodeId },
    ContactUp { a: NodeId, b: NodeId },
    StatsExchange { a: NodeId, b: NodeId },
    TransferComplete { transfer: u64, version: u64 },
    ExecComplete { node: NodeId, version: u64 },
    CpuFlip { node: NodeId },
    RequestGen,
}

impl EventKind {
    /// Order among events at the same instant: links change state first,
    /// then knowledge is exchanged, then work completes.
    pub fn priority(&self) -> u8 {
        match self {
            EventKind::ContactDown { .. } => 0,
            EventKind::ContactUp { .. } => 1,
            EventKind::StatsExchange { .. } => 2,
            EventKind::TransferComplete { .. } => 3,
            EventKind::ExecComplete { .. } => 4,
            EventKind::CpuFlip { .. } => 5,
            EventKind::RequestGen => 6,
        }
    }

    /// Stable byte encoding for the run digest.
    pub fn encode(&self) -> [u8; 17] {
        let (x, y) = match *self {
            EventKind::ContactDown { a, b } | EventKind::ContactUp { a, b } | EventKind::StatsExchange { a, b } => {
                (u64::from(a.0), u64::from(b.0))
            }
            EventKind::TransferComplete { transfer, version } => (transfer, version),
            EventKind::ExecComplete { node, version } => (u64::from(node.0), version),
            EventKind::CpuFlip { node } => (u64::from(node.0), 0),
            EventKind::RequestGen => (0, 0),
        };
        let mut out = [0u8; 17];
        out[0] = self.priority();
        out[1..9].copy_from_slice(&x.to_le_bytes());
        out[9..].copy_from_slice(&y.to_le_bytes());
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub time: SimTime,
    pub kind: EventKind,
}

#[derive(Debug, PartialEq, Eq)]
struct Entry {
    time: SimTime,
    priority: u8,
    seq: u64,
    kind: EventKind,
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.time, self.priority, self.seq).cmp(&(other.time, other.priority, other.seq))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Pending events ordered by (time, priority, insertion order).
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Reverse<Entry>>,
    seq: u64,
}

impl EventQueue {
    pub fn push(&mut self, time: SimTime, kind: EventKind) {
        self.seq += 1;
        self.heap.push(Reverse(Entry { time, priority: kind.priority(), seq: self.seq, kind }));
    }

    /// Time and priority of the next event.
    pub fn peek_key(&self) -> Option<(SimTime, u8)> {
        self.heap.peek().map(|Reverse(e)| (e.time, e.priority))
    }

    pub fn pop(&mut self) -> Option<Event> {
        self.heap.pop().map(|Reverse(e)| Event { time: e.time, kind: e.kind })
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orders_by_time_then_priority_then_insertion() {
        let mut q = EventQueue::default();
        q.push(SimTime(5), EventKind::RequestGen);
        q.push(SimTime(5), EventKind::CpuFlip { node: NodeId(1) });
        q.push(SimTime(5), EventKind::CpuFlip { node: NodeId(0) });
        q.push(SimTime(3), EventKind::RequestGen);
        let order: Vec<_> = std::iter::from_fn(|| q.pop()).collect();
        assert_eq!(order[0].time, SimTime(3));
        assert_eq!(order[1].kind, EventKind::CpuFlip { node: NodeId(1) });
        assert_eq!(order[2].kind, EventKind::CpuFlip { node: NodeId(0) });
        assert_eq!(order[3].kind, EventKind::RequestGen);
    }
}
