use serde::Serialize;

use crate::channel::{ChannelState, OnOffChannel};
use crate::queue::{QueueSampler, QueueSpec};
use crate::stats::{par_chunks, OracleResult, Welford};

/// One seeker delegating one task to one provider over a single on-off
/// channel: wait for contact, send the input, queue and execute at the
/// provider, send the output back.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SingleServiceSpec {
    pub channel: OnOffChannel,
    pub input_bytes: f64,
    pub output_bytes: f64,
    pub queue: QueueSpec,
    pub start_in_contact: bool,
}

/// How the interaction played out.
///
/// `One`: the first contact lasts until the output is back. `TwoA`: the
/// first contact ends while the output is moving. `TwoB`/`TwoC`: it ends
/// while the task is at the provider and the output starts in a later
/// contact / during an inter-contact period. `Three`: it ends before the
/// input has been sent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Case {
    One,
    TwoA,
    TwoB,
    TwoC,
    Three,
}

const CASES: usize = 5;

impl Case {
    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SingleServiceResult {
    pub n_trials: u64,
    pub response: OracleResult,
    pub input: OracleResult,
    pub output: OracleResult,
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub p2a: f64,
    pub p2b: f64,
    pub p2c: f64,
    /// Output-transfer mean conditioned on each case, in the order
    /// one, 2A, 2B, 2C, three.
    pub output_by_case: [OracleResult; CASES],
    pub input_given_three: OracleResult,
}

/// Customers skipped between two tagged customers of the queue stream.
const SPACING: usize = 4;

pub fn mc_single_service(spec: &SingleServiceSpec, n_trials: u64, seed: u64) -> SingleServiceResult {
    let spec = *spec;
    let parts = par_chunks(n_trials, seed, move |rng, len| {
        let ch = spec.channel;
        let mut q = QueueSampler::new(spec.queue);
        for _ in 0..5000 {
            q.next_customer(rng);
        }
        let mut resp = Welford::new();
        let mut input = Welford::new();
        let mut output = Welford::new();
        let mut by_case = [Welford::new(); CASES];
        let mut input3 = Welford::new();
        for _ in 0..len {
            for _ in 0..SPACING {
                q.next_customer(rng);
            }
            let (wait, service) = q.next_customer(rng);
            let sojourn = wait + service;

            let mut s = ChannelState::fresh(&ch, spec.start_in_contact, rng);
            let mut w = 0.0;
            if !s.on {
                w = s.left;
                s.elapse(&ch, w, rng);
            }
            s.contacts_ended = 0;
            let b = s.send(&ch, spec.input_bytes, rng);
            let three = s.contacts_ended > 0;
            s.elapse(&ch, sojourn, rng);
            let first_alive = s.contacts_ended == 0;
            let on_at_output = s.on;
            let before = s.contacts_ended;
            let theta = s.send(&ch, spec.output_bytes, rng);
            let cut = s.contacts_ended > before;
            let case = if three {
                Case::Three
            } else if first_alive {
                if cut {
                    Case::TwoA
                } else {
                    Case::One
                }
            } else if on_at_output {
                Case::TwoB
            } else {
                Case::TwoC
            };
            resp.push(w + b + sojourn + theta);
            input.push(b);
            output.push(theta);
            by_case[case.index()].push(theta);
            if three {
                input3.push(b);
            }
        }
        (resp, input, output, by_case, input3)
    });
    let mut resp = Welford::new();
    let mut input = Welford::new();
    let mut output = Welford::new();
    let mut by_case = [Welford::new(); CASES];
    let mut input3 = Welford::new();
    for p in &parts {
        resp.merge(&p.0);
        input.merge(&p.1);
        output.merge(&p.2);
        for i in 0..CASES {
            by_case[i].merge(&p.3[i]);
        }
        input3.merge(&p.4);
    }
    let n = resp.count().max(1) as f64;
    let freq = |c: Case| by_case[c.index()].count() as f64 / n;
    SingleServiceResult {
        n_trials: resp.count(),
        response: resp.result(),
        input: input.result(),
        output: output.result(),
        p1: freq(Case::One),
        p2: freq(Case::TwoA) + freq(Case::TwoB) + freq(Case::TwoC),
        p3: freq(Case::Three),
        p2a: freq(Case::TwoA),
        p2b: freq(Case::TwoB),
        p2c: freq(Case::TwoC),
        output_by_case: by_case.map(|w| w.result()),
        input_given_three: input3.result(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::queue::{BatchDist, ServiceDist};

    #[test]
    fn case_frequencies_sum_to_one() {
        let spec = SingleServiceSpec {
            channel: OnOffChannel { contact_rate: 0.02, intercontact_rate: 0.005, throughput: 1e5 },
            input_bytes: 4e4,
            output_bytes: 4e4,
            queue: QueueSpec {
                batch_rate: 0.5 / 75.0,
                batch: BatchDist::Fixed(1),
                service: ServiceDist::Exponential { mean: 75.0 },
            },
            start_in_contact: true,
        };
        let r = mc_single_service(&spec, 20_000, 1);
        assert_eq!(r.n_trials, 20_000);
        assert!((r.p1 + r.p2 + r.p3 - 1.0).abs() < 1e-12);
    }
}
