//! Summary statistics computed from per-request rows alone.

use std::collections::BTreeMap;

use oppcomp::policies::PolicyKind;
use oppcomp::sim::PolicySpec;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::config::ExperimentConfig;
use crate::report::RequestRow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Simulate,
    Compare,
    RankEval,
}

impl Mode {
    /// Policies run by this mode, in report order.
    pub fn policies(self, cfg: &ExperimentConfig) -> Vec<PolicySpec> {
        match self {
            Mode::Simulate | Mode::Compare => cfg.policies.clone(),
            Mode::RankEval => (1..=cfg.top_k).map(PolicySpec::MevRank).collect(),
        }
    }
}

/// Mean with a two-sided 95% Student-t interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub n: usize,
    pub mean: Option<f64>,
    /// Absent with fewer than two samples.
    pub half_width: Option<f64>,
}

impl Interval {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Interval { n, mean: None, half_width: None };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let half_width = (n >= 2).then(|| {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("positive degrees of freedom").inverse_cdf(0.975);
            t * (var / n as f64).sqrt()
        });
        Interval { n, mean: Some(mean), half_width }
    }

    pub fn lo(&self) -> Option<f64> {
        Some(self.mean? - self.half_width?)
    }

    pub fn hi(&self) -> Option<f64> {
        Some(self.mean? + self.half_width?)
    }

    /// Both intervals exist and share no point.
    pub fn disjoint(&self, other: &Interval) -> bool {
        match (self.lo(), self.hi(), other.lo(), other.hi()) {
            (Some(a), Some(b), Some(c), Some(d)) => b < c || d < a,
            _ => false,
        }
    }
}

fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub seed: u64,
    pub completed: usize,
    pub mean: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseMeans {
    pub wait: Option<f64>,
    pub input_transfer: Option<f64>,
    pub queue: Option<f64>,
    pub exec: Option<f64>,
    pub transfer: Option<f64>,
}

/// Model estimate against the simulated time on the same requests. Plans
/// the model scores as unreachable are left out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateAccuracy {
    pub requests: usize,
    pub mean_estimate: f64,
    pub mean_simulated: f64,
    /// |estimate − simulated| / simulated, on the means.
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: String,
    pub requests: usize,
    pub completed: usize,
    pub pending: usize,
    /// Over replication means.
    pub provisioning_time: Interval,
    pub replications: Vec<Replication>,
    pub mean_legs: Option<f64>,
    pub phases: PhaseMeans,
    pub estimate: Option<EstimateAccuracy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareEntry {
    pub policy: String,
    pub pct_best: f64,
    pub mean_time: f64,
    pub mean_loss: f64,
    /// Over groups of consecutive requests.
    pub loss: Interval,
}

/// Per-request fastest of the non-model policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleEntry {
    pub members: Vec<String>,
    pub mean_time: f64,
    pub mean_loss: f64,
    pub loss: Interval,
    /// Mean of (oracle − MEV) per request.
    pub mean_gap_vs_mev: f64,
    pub pct_faster_than_mev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub aligned: usize,
    /// Requests left out because some policy had not finished them.
    pub excluded_pending: usize,
    pub group_size: usize,
    pub groups: usize,
    pub policies: Vec<CompareEntry>,
    pub oracle_best: Option<OracleEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub rank: usize,
    /// Requests for which this position had a plan of its own.
    pub requests: usize,
    pub fraction_fastest: f64,
    pub mean_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub top_k: usize,
    pub cohort: usize,
    pub excluded_pending: usize,
    pub positions: Vec<RankEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mode: Mode,
    pub seeds: Vec<u64>,
    pub policies: Vec<PolicySummary>,
    pub comparison: Option<Comparison>,
    pub ranking: Option<Ranking>,
    pub notes: Vec<String>,
}

impl Summary {
    pub fn policy(&self, label: &str) -> Option<&PolicySummary> {
        self.policies.iter().find(|p| p.policy == label)
    }
}

fn policy_summary(label: &str, seeds: &[u64], rows: &[&RequestRow]) -> PolicySummary {
    let done: Vec<&RequestRow> = rows.iter().copied().filter(|r| r.is_complete()).collect();
    let t = |r: &RequestRow| r.provisioning_time.expect("complete");
    let replications: Vec<Replication> = seeds
        .iter()
        .map(|&seed| {
            let mine: Vec<f64> = done.iter().filter(|r| r.seed == seed).map(|r| t(r)).collect();
            Replication { seed, completed: mine.len(), mean: mean(mine) }
        })
        .collect();
    let means: Vec<f64> = replications.iter().filter_map(|r| r.mean).collect();
    let phase = |f: fn(&RequestRow) -> Option<f64>| mean(done.iter().filter_map(|r| f(r)));
    let with_estimate: Vec<(f64, f64)> = done.iter().filter_map(|r| Some((r.estimate.filter(|e| e.is_finite())?, t(r)))).collect();
    let estimate = (!with_estimate.is_empty()).then(|| {
        let e = mean(with_estimate.iter().map(|p| p.0)).expect("non-empty");
        let s = mean(with_estimate.iter().map(|p| p.1)).expect("non-empty");
        EstimateAccuracy { requests: with_estimate.len(), mean_estimate: e, mean_simulated: s, relative_error: (e - s).abs() / s }
    });
    PolicySummary {
        policy: label.to_string(),
        requests: rows.len(),
        completed: done.len(),
        pending: rows.len() - done.len(),
        provisioning_time: Interval::of(&means),
        replications,
        mean_legs: mean(done.iter().map(|r| r.n_legs as f64)),
        phases: PhaseMeans {
            wait: phase(|r| r.wait),
            input_transfer: phase(|r| r.input_transfer),
            queue: phase(|r| r.queue),
            exec: phase(|r| r.exec),
            transfer: phase(|r| r.transfer),
        },
        estimate,
    }
}

/// Index of the smallest value, ties going to the earliest.
fn fastest(times: &[f64]) -> usize {
    let mut best = 0;
    for (i, &t) in times.iter().enumerate() {
        if t < times[best] {
            best = i;
        }
    }
    best
}

type Key = (u64, u64);

fn by_request<'a>(rows: &[&'a RequestRow]) -> BTreeMap<Key, &'a RequestRow> {
    rows.iter().map(|r| ((r.seed, r.request_id), *r)).collect()
}

fn comparison(labels: &[String], per_policy: &[Vec<&RequestRow>], group_size: usize) -> Comparison {
    let maps: Vec<BTreeMap<Key, &RequestRow>> = per_policy.iter().map(|rows| by_request(rows)).collect();
    let mut keys: Vec<Key> = maps.iter().flat_map(|m| m.keys().copied()).collect();
    keys.sort_unstable();
    keys.dedup();
    // times[i][p] for aligned request i
    let mut aligned: Vec<(Key, Vec<f64>)> = Vec::new();
    for k in &keys {
        let ts: Option<Vec<f64>> = maps.iter().map(|m| m.get(k).and_then(|r| r.provisioning_time)).collect();
        if let Some(ts) = ts {
            aligned.push((*k, ts));
        }
    }
    let n = aligned.len();
    let np = labels.len();
    let mev = labels.iter().position(|l| l == PolicyKind::Mev.name());
    let members: Vec<usize> =
        (0..np).filter(|&i| [PolicyKind::Afir, PolicyKind::Ran, PolicyKind::Ato].iter().any(|k| labels[i] == k.name())).collect();
    let with_oracle = mev.is_some() && !members.is_empty();

    let mut wins = vec![0usize; np];
    // losses[p] per request; the last column is the oracle
    let mut losses: Vec<Vec<f64>> = vec![Vec::with_capacity(n); np + 1];
    let mut oracle_times = Vec::new();
    let (mut gap, mut faster) = (Vec::new(), 0usize);
    for (_, ts) in &aligned {
        let b = fastest(ts);
        wins[b] += 1;
        for p in 0..np {
            losses[p].push(ts[p] - ts[b]);
        }
        if with_oracle {
            let o = members.iter().map(|&i| ts[i]).fold(f64::INFINITY, f64::min);
            let m = ts[mev.expect("checked")];
            losses[np].push(o - ts[b]);
            oracle_times.push(o);
            gap.push(o - m);
            faster += usize::from(o < m);
        }
    }

    // groups of consecutive aligned requests within each seed
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut i = 0;
    while i < n {
        let seed = aligned[i].0 .0;
        let mut j = i;
        while j < n && aligned[j].0 .0 == seed {
            j += 1;
        }
        let mut s = i;
        while s < j {
            let e = (s + group_size).min(j);
            groups.push((s..e).collect());
            s = e;
        }
        i = j;
    }
    let grouped = |col: &[f64]| {
        let g: Vec<f64> = groups.iter().map(|idx| idx.iter().map(|&i| col[i]).sum::<f64>() / idx.len() as f64).collect();
        Interval::of(&g)
    };
    let mean0 = |xs: &[f64]| mean(xs.iter().copied()).unwrap_or(0.0);
    let pct = |c: usize| if n == 0 { 0.0 } else { 100.0 * c as f64 / n as f64 };

    let policies = (0..np)
        .map(|p| CompareEntry {
            policy: labels[p].clone(),
            pct_best: pct(wins[p]),
            mean_time: mean0(&aligned.iter().map(|(_, ts)| ts[p]).collect::<Vec<_>>()),
            mean_loss: mean0(&losses[p]),
            loss: grouped(&losses[p]),
        })
        .collect();
    let oracle_best = with_oracle.then(|| OracleEntry {
        members: members.iter().map(|&i| labels[i].clone()).collect(),
        mean_time: mean0(&oracle_times),
        mean_loss: mean0(&losses[np]),
        loss: grouped(&losses[np]),
        mean_gap_vs_mev: mean0(&gap),
        pct_faster_than_mev: pct(faster),
    });
    Comparison { aligned: n, excluded_pending: keys.len() - n, group_size, groups: groups.len(), policies, oracle_best }
}

fn ranking(per_rank: &[Vec<&RequestRow>]) -> Ranking {
    let k = per_rank.len();
    let maps: Vec<BTreeMap<Key, &RequestRow>> = per_rank.iter().map(|rows| by_request(rows)).collect();
    let mut wins = vec![0usize; k];
    let mut losses: Vec<Vec<f64>> = vec![Vec::new(); k];
    let (mut cohort, mut excluded) = (0usize, 0usize);
    for (key, first) in maps.first().into_iter().flatten() {
        if !first.rank_exact {
            continue;
        }
        // positions with a plan of their own, in rank order
        let own: Vec<(usize, &RequestRow)> =
            (0..k).filter_map(|j| maps[j].get(key).filter(|r| r.rank_exact).map(|r| (j, *r))).collect();
        let times: Option<Vec<f64>> = own.iter().map(|(_, r)| r.provisioning_time).collect();
        let Some(times) = times else {
            excluded += 1;
            continue;
        };
        cohort += 1;
        let b = fastest(&times);
        wins[own[b].0] += 1;
        for (i, (j, _)) in own.iter().enumerate() {
            losses[*j].push(times[i] - times[b]);
        }
    }
    let positions = (0..k)
        .map(|j| RankEntry {
            rank: j + 1,
            requests: losses[j].len(),
            fraction_fastest: if cohort == 0 { 0.0 } else { wins[j] as f64 / cohort as f64 },
            mean_loss: mean(losses[j].iter().copied()),
        })
        .collect();
    Ranking { top_k: k, cohort, excluded_pending: excluded, positions }
}

fn notes(mode: Mode) -> Vec<String> {
    let mut v = vec![
        "provisioning_time intervals are 95% Student-t intervals over per-seed replication means".to_string(),
        "requests still pending at the end of a run are excluded from time statistics".to_string(),
    ];
    match mode {
        Mode::Compare => v.push(
            "policies run in separate simulations on identical request streams (common random numbers), not as concurrent agents in one network; \
             only requests finished under every policy are compared"
                .to_string(),
        ),
        Mode::RankEval => v.push(
            "each rank position is its own simulation following that position of the model ranking; a request counts where every position with its own plan finished"
                .to_string(),
        ),
        Mode::Simulate => {}
    }
    v
}

/// The full summary for `rows` produced under `cfg` in `mode`.
pub fn summarize(mode: Mode, cfg: &ExperimentConfig, rows: &[RequestRow]) -> Summary {
    let labels: Vec<String> = mode.policies(cfg).iter().map(ToString::to_string).collect();
    let per_policy: Vec<Vec<&RequestRow>> = labels.iter().map(|l| rows.iter().filter(|r| &r.policy == l).collect()).collect();
    let policies = labels.iter().zip(&per_policy).map(|(l, rs)| policy_summary(l, &cfg.seeds, rs)).collect();
    Summary {
        mode,
        seeds: cfg.seeds.clone(),
        policies,
        comparison: (mode == Mode::Compare).then(|| comparison(&labels, &per_policy, cfg.group_size)),
        ranking: (mode == Mode::RankEval).then(|| ranking(&per_policy)),
        notes: notes(mode),
    }
}
