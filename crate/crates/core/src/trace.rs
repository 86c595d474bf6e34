//! Contact traces: CSV parsing and writing, synthetic generation and
//! summary statistics.
//!
//! The CSV format has the header `t_start,t_end,node_a,node_b`, one contact
//! per line, times in decimal seconds and non-negative integer node ids.
//! Traces from other sources can be converted by emitting one line per
//! contact interval in that form.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use log::warn;
use rand_distr::{Distribution, Exp};
use serde::Serialize;
use thiserror::Error;

use crate::ids::NodeId;
use crate::rng::substream2;

pub const HEADER: [&str; 4] = ["t_start", "t_end", "node_a", "node_b"];

/// One contact between two nodes, with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContactInterval {
    pub a: NodeId,
    pub b: NodeId,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("expected header {expected:?}, found {found:?}")]
    Header { expected: String, found: String },
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// What happened to the input lines.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ParseReport {
    pub lines: u64,
    pub kept: u64,
    pub merged: u64,
    pub dropped_empty: u64,
    pub dropped_self: u64,
}

/// Sorts, canonicalises and merges overlapping or touching intervals of
/// the same pair. Returns the number of merges.
pub fn normalize(intervals: Vec<ContactInterval>) -> (Vec<ContactInterval>, u64) {
    let mut by_pair: BTreeMap<(NodeId, NodeId), Vec<(f64, f64)>> = BTreeMap::new();
    for c in intervals {
        let key = if c.a <= c.b { (c.a, c.b) } else { (c.b, c.a) };
        by_pair.entry(key).or_default().push((c.start, c.end));
    }
    let mut merges = 0;
    let mut out = Vec::new();
    for ((a, b), mut list) in by_pair {
        list.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
        let mut cur = list[0];
        for &(s, e) in &list[1..] {
            if s <= cur.1 {
                cur.1 = cur.1.max(e);
                merges += 1;
            } else {
                out.push(ContactInterval { a, b, start: cur.0, end: cur.1 });
                cur = (s, e);
            }
        }
        out.push(ContactInterval { a, b, start: cur.0, end: cur.1 });
    }
    sort_intervals(&mut out);
    (out, merges)
}

fn sort_intervals(v: &mut [ContactInterval]) {
    v.sort_by(|x, y| x.start.total_cmp(&y.start).then(x.a.cmp(&y.a)).then(x.b.cmp(&y.b)).then(x.end.total_cmp(&y.end)));
}

/// Parses a CSV trace. Intervals with `t_end <= t_start` and self-contacts
/// are dropped with a warning; malformed fields abort with the line number.
pub fn parse_trace<R: Read>(input: R) -> Result<(Vec<ContactInterval>, ParseReport), TraceError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(TraceError::Header { expected: HEADER.join(","), found: header.iter().collect::<Vec<_>>().join(",") });
    }
    let mut report = ParseReport::default();
    let mut raw = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        report.lines += 1;
        let field = |i: usize| rec.get(i).ok_or_else(|| TraceError::Parse { line, message: format!("missing field {}", HEADER[i]) });
        let time = |i: usize| -> Result<f64, TraceError> {
            let s = field(i)?;
            match s.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(TraceError::Parse { line, message: format!("{} is not a finite number: {s:?}", HEADER[i]) }),
            }
        };
        let node = |i: usize| -> Result<NodeId, TraceError> {
            let s = field(i)?;
            s.parse::<u32>()
                .map(NodeId)
                .map_err(|_| TraceError::Parse { line, message: format!("{} is not a node id: {s:?}", HEADER[i]) })
        };
        let (start, end, a, b) = (time(0)?, time(1)?, node(2)?, node(3)?);
        if end <= start {
            warn!("line {line}: dropping empty interval [{start}, {end}]");
            report.dropped_empty += 1;
            continue;
        }
        if a == b {
            warn!("line {line}: dropping self-contact of node {a}");
            report.dropped_self += 1;
            continue;
        }
        raw.push(ContactInterval { a, b, start, end });
    }
    if raw.is_empty() {
        return Ok((raw, report));
    }
    let (out, merges) = normalize(raw);
    report.merged = merges;
    report.kept = out.len() as u64;
    Ok((out, report))
}

/// Writes intervals in the CSV trace format.
pub fn serialize_trace<W: Write>(intervals: &[ContactInterval], out: W) -> Result<(), TraceError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for c in intervals {
        w.write_record([c.start.to_string(), c.end.to_string(), c.a.to_string(), c.b.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Independent alternating exponential contact processes for every pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SyntheticSpec {
    pub n_nodes: u32,
    pub delta: f64,
    pub delta_prime: f64,
    pub duration: f64,
    pub seed: u64,
}

/// Each pair starts with a full inter-contact period, then alternates
/// exponential contacts and inter-contacts until `duration`, where the
/// last contact is cut.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<ContactInterval>, TraceError> {
    let up = Exp::new(spec.delta).map_err(|_| TraceError::InvalidSpec(format!("delta {}", spec.delta)))?;
    let down = Exp::new(spec.delta_prime).map_err(|_| TraceError::InvalidSpec(format!("delta_prime {}", spec.delta_prime)))?;
    if !(spec.delta > 0.0 && spec.delta_prime > 0.0) || !(spec.duration >= 0.0) {
        return Err(TraceError::InvalidSpec("rates must be positive and duration non-negative".into()));
    }
    let mut out = Vec::new();
    for a in 0..spec.n_nodes {
        for b in a + 1..spec.n_nodes {
            let mut rng = substream2(spec.seed, "trace", u64::from(a), u64::from(b));
            let mut t = down.sample(&mut rng);
            while t < spec.duration {
                let end = t + up.sample(&mut rng);
                let cut = end.min(spec.duration);
                if cut > t {
                    out.push(ContactInterval { a: NodeId(a), b: NodeId(b), start: t, end: cut });
                }
                t = end + down.sample(&mut rng);
            }
        }
    }
    sort_intervals(&mut out);
    Ok(out)
}

/// Mean and sample variance of a set of durations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct DurationStats {
    pub count: u64,
    pub mean: f64,
    pub variance: f64,
}

impl DurationStats {
    fn of(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return Self::default();
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let variance = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        DurationStats { count: xs.len() as u64, mean, variance }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairSummary {
    pub a: NodeId,
    pub b: NodeId,
    pub contact: DurationStats,
    pub intercontact: DurationStats,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TraceSummary {
    pub n_intervals: u64,
    pub n_nodes: u64,
    pub horizon: f64,
    pub contact: DurationStats,
    pub intercontact: DurationStats,
    /// Fraction of node pairs that met at least once.
    pub pair_coverage: f64,
    /// Fraction of the horizon that an observed pair spends in contact,
    /// averaged over observed pairs.
    pub contact_fraction: f64,
    pub pairs: Vec<PairSummary>,
}

/// Summary of a normalised trace. `horizon` defaults to the last contact
/// end.
pub fn trace_stats(intervals: &[ContactInterval], horizon: Option<f64>) -> TraceSummary {
    if intervals.is_empty() {
        return TraceSummary { horizon: horizon.unwrap_or(0.0), ..TraceSummary::default() };
    }
    let horizon = horizon.unwrap_or_else(|| intervals.iter().map(|c| c.end).fold(0.0, f64::max));
    let mut by_pair: BTreeMap<(NodeId, NodeId), Vec<(f64, f64)>> = BTreeMap::new();
    let mut max_id = 0;
    for c in intervals {
        by_pair.entry((c.a, c.b)).or_default().push((c.start, c.end));
        max_id = max_id.max(c.a.0).max(c.b.0);
    }
    let (mut all_c, mut all_i) = (Vec::new(), Vec::new());
    let mut total_contact = 0.0;
    let mut pairs = Vec::new();
    for ((a, b), mut list) in by_pair {
        list.sort_by(|x, y| x.0.total_cmp(&y.0));
        let c: Vec<f64> = list.iter().map(|(s, e)| e - s).collect();
        let i: Vec<f64> = list.windows(2).map(|w| w[1].0 - w[0].1).collect();
        total_contact += c.iter().sum::<f64>();
        pairs.push(PairSummary { a, b, contact: DurationStats::of(&c), intercontact: DurationStats::of(&i) });
        all_c.extend(c);
        all_i.extend(i);
    }
    let n_nodes = u64::from(max_id) + 1;
    let possible = (n_nodes * (n_nodes - 1) / 2).max(1) as f64;
    let observed = pairs.len() as f64;
    TraceSummary {
        n_intervals: intervals.len() as u64,
        n_nodes,
        horizon,
        contact: DurationStats::of(&all_c),
        intercontact: DurationStats::of(&all_i),
        pair_coverage: observed / possible,
        contact_fraction: if horizon > 0.0 { total_contact / (observed * horizon) } else { 0.0 },
        pairs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> (Vec<ContactInterval>, ParseReport) {
        parse_trace(s.as_bytes()).unwrap()
    }

    #[test]
    fn canonicalises() {
        let (v, _) = parse("t_start,t_end,node_a,node_b\n0,50,2,1\n");
        assert_eq!(v, vec![ContactInterval { a: NodeId(1), b: NodeId(2), start: 0.0, end: 50.0 }]);
    }

    #[test]
    fn merges_overlaps() {
        let (v, r) = parse("t_start,t_end,node_a,node_b\n0,50,1,2\n40,60,2,1\n60,70,1,2\n80,90,1,2\n");
        assert_eq!(v.len(), 2);
        assert_eq!((v[0].start, v[0].end), (0.0, 70.0));
        assert_eq!(r.merged, 2);
    }

    #[test]
    fn drops_invalid_lines() {
        let (v, r) = parse("t_start,t_end,node_a,node_b\n10,5,1,2\n3,3,1,2\n1,2,4,4\n");
        assert!(v.is_empty());
        assert_eq!((r.dropped_empty, r.dropped_self), (2, 1));
    }

    #[test]
    fn fatal_errors_carry_line_numbers() {
        let e = parse_trace("t_start,t_end,node_a,node_b\n0,1,1,2\nx,1,1,2\n".as_bytes()).unwrap_err();
        assert!(matches!(e, TraceError::Parse { line: 3, .. }), "{e}");
        let e = parse_trace("t_start,t_end,node_a,node_b\n0,1,-1,2\n".as_bytes()).unwrap_err();
        assert!(matches!(e, TraceError::Parse { line: 2, .. }), "{e}");
        assert!(matches!(parse_trace("a,b,c,d\n".as_bytes()), Err(TraceError::Header { .. })));
    }

    #[test]
    fn stats_examples() {
        let one = [ContactInterval { a: NodeId(0), b: NodeId(1), start: 0.0, end: 50.0 }];
        let s = trace_stats(&one, Some(100.0));
        assert_eq!(s.contact_fraction, 0.5);
        assert_eq!(s.pair_coverage, 1.0);
        let empty = trace_stats(&[], None);
        assert_eq!(empty, TraceSummary::default());
    }

    #[test]
    fn synthetic_edge_cases() {
        let spec = SyntheticSpec { n_nodes: 5, delta: 0.02, delta_prime: 0.005, duration: 0.0, seed: 1 };
        assert!(generate_synthetic(&spec).unwrap().is_empty());
        let bad = SyntheticSpec { delta: 0.0, ..spec };
        assert!(generate_synthetic(&bad).is_err());
    }
}
