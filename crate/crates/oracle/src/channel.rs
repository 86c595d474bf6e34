use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use crate::stats::{mean_of_trials, par_chunks, OracleResult, Welford};

/// Alternating contact / inter-contact channel.
///
/// Contact periods are exponential with rate `contact_rate`, inter-contact
/// periods exponential with rate `intercontact_rate`, and data moves at
/// `throughput` bytes per second while in contact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OnOffChannel {
    pub contact_rate: f64,
    pub intercontact_rate: f64,
    pub throughput: f64,
}

/// Where the channel is when the observed transfer begins.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartPhase {
    /// At the beginning of a contact.
    Contact,
    /// At the beginning of an inter-contact period.
    Intercontact,
    /// At an arbitrary instant of a long-running channel.
    Steady,
}

#[inline]
fn exp<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    let e: f64 = Exp1.sample(rng);
    e / rate
}

/// Mutable position inside one realisation of the channel.
#[derive(Debug, Clone, Copy)]
pub struct ChannelState {
    pub on: bool,
    /// Time left in the current period.
    pub left: f64,
    /// Contacts that have ended since the state was created.
    pub contacts_ended: u64,
}

impl ChannelState {
    pub fn new<R: Rng + ?Sized>(ch: &OnOffChannel, phase: StartPhase, rng: &mut R) -> Self {
        match phase {
            StartPhase::Contact => Self::fresh(ch, true, rng),
            StartPhase::Intercontact => Self::fresh(ch, false, rng),
            StartPhase::Steady => {
                let mut s = Self::fresh(ch, true, rng);
                s.elapse(ch, 40.0 / (ch.contact_rate + ch.intercontact_rate), rng);
                s.contacts_ended = 0;
                s
            }
        }
    }

    pub fn fresh<R: Rng + ?Sized>(ch: &OnOffChannel, on: bool, rng: &mut R) -> Self {
        let rate = if on { ch.contact_rate } else { ch.intercontact_rate };
        ChannelState { on, left: exp(rng, rate), contacts_ended: 0 }
    }

    fn flip<R: Rng + ?Sized>(&mut self, ch: &OnOffChannel, rng: &mut R) {
        if self.on {
            self.contacts_ended += 1;
        }
        self.on = !self.on;
        let rate = if self.on { ch.contact_rate } else { ch.intercontact_rate };
        self.left = exp(rng, rate);
    }

    /// Lets `dt` seconds of wall-clock time pass.
    pub fn elapse<R: Rng + ?Sized>(&mut self, ch: &OnOffChannel, mut dt: f64, rng: &mut R) {
        while dt >= self.left {
            dt -= self.left;
            self.flip(ch, rng);
        }
        self.left -= dt;
    }

    /// Moves `bytes` through the channel and returns the wall-clock time
    /// taken, including any wait for the channel to come on.
    pub fn send<R: Rng + ?Sized>(&mut self, ch: &OnOffChannel, bytes: f64, rng: &mut R) -> f64 {
        let mut need = bytes / ch.throughput;
        let mut elapsed = 0.0;
        loop {
            if self.on {
                if need < self.left {
                    self.left -= need;
                    return elapsed + need;
                }
                need -= self.left;
            }
            elapsed += self.left;
            self.flip(ch, rng);
        }
    }
}

/// Mean wall-clock time to move `bytes` through the channel from `start`.
pub fn mc_transfer_time(ch: &OnOffChannel, bytes: f64, start: StartPhase, n_trials: u64, seed: u64) -> OracleResult {
    let ch = *ch;
    mean_of_trials(n_trials, seed, move |rng| {
        let mut s = ChannelState::new(&ch, start, rng);
        s.send(&ch, bytes, rng)
    })
}

/// Mean transfer time starting at the beginning of a contact, conditioned
/// on that first contact ending before `bytes` have been moved.
///
/// The first contact length is drawn from the exponential law truncated to
/// `(0, bytes / throughput)` by inversion.
pub fn mc_transfer_time_short_first_contact(ch: &OnOffChannel, bytes: f64, n_trials: u64, seed: u64) -> OracleResult {
    let ch = *ch;
    let a = bytes / ch.throughput;
    let mass = -(-ch.contact_rate * a).exp_m1();
    mean_of_trials(n_trials, seed, move |rng| {
        let u: f64 = rng.random();
        let first = -(-u * mass).ln_1p() / ch.contact_rate;
        let first = first.min(a);
        let mut s = ChannelState { on: false, left: exp(rng, ch.intercontact_rate), contacts_ended: 1 };
        first + s.send(&ch, bytes - first * ch.throughput, rng)
    })
}

/// Mean residual inter-contact time seen by an observer arriving at a
/// uniformly random instant while the channel is off.
///
/// Simulates one long alternating realisation per chunk and averages the
/// residual time over all off instants (sum of squared lengths over twice
/// the total off time). The standard error comes from batch means with
/// one batch per chunk.
pub fn mc_wait_for_contact(ch: &OnOffChannel, n_periods: u64, seed: u64) -> OracleResult {
    let ch = *ch;
    let parts = par_chunks(n_periods, seed, move |rng, len| {
        let mut sum_sq = 0.0;
        let mut sum = 0.0;
        for _ in 0..len {
            // The interleaving contact periods do not affect the residual
            // averages but are drawn to keep the realisation honest.
            let _on = exp(rng, ch.contact_rate);
            let off = exp(rng, ch.intercontact_rate);
            sum_sq += off * off;
            sum += off;
        }
        (sum_sq, sum)
    });
    let total_sq: f64 = parts.iter().map(|p| p.0).sum();
    let total: f64 = parts.iter().map(|p| p.1).sum();
    let mut batches = Welford::new();
    for p in &parts {
        if p.1 > 0.0 {
            batches.push(p.0 / (2.0 * p.1));
        }
    }
    let se = if batches.count() > 1 { (batches.variance() / batches.count() as f64).sqrt() } else { f64::INFINITY };
    OracleResult { estimate: total_sq / (2.0 * total), std_error: se, n_trials: n_periods }
}

/// Empirical distribution of a non-negative count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountDistribution {
    pub counts: Vec<u64>,
    pub n_trials: u64,
}

impl CountDistribution {
    pub fn prob(&self, k: usize) -> f64 {
        self.counts.get(k).copied().unwrap_or(0) as f64 / self.n_trials as f64
    }

    /// Mode of the empirical distribution (lowest value on ties).
    pub fn mode(&self) -> usize {
        let mut best = 0;
        for (i, &c) in self.counts.iter().enumerate() {
            if c > self.counts[best] {
                best = i;
            }
        }
        best
    }

    /// Binomial standard error of the frequency of `k` when the true
    /// probability is `p`.
    pub fn null_std_error(&self, p: f64) -> f64 {
        (p * (1.0 - p) / self.n_trials as f64).sqrt()
    }
}

/// Distribution of the number of contacts that end while `bytes` are moved
/// through the channel from `start`.
pub fn mc_interruption_count(ch: &OnOffChannel, bytes: f64, start: StartPhase, n_trials: u64, seed: u64) -> CountDistribution {
    let ch = *ch;
    let parts = par_chunks(n_trials, seed, move |rng, len| {
        let mut counts: Vec<u64> = Vec::new();
        for _ in 0..len {
            let mut s = ChannelState::new(&ch, start, rng);
            s.send(&ch, bytes, rng);
            let k = s.contacts_ended as usize;
            if counts.len() <= k {
                counts.resize(k + 1, 0);
            }
            counts[k] += 1;
        }
        counts
    });
    let mut counts: Vec<u64> = Vec::new();
    for p in parts {
        if counts.len() < p.len() {
            counts.resize(p.len(), 0);
        }
        for (i, c) in p.into_iter().enumerate() {
            counts[i] += c;
        }
    }
    CountDistribution { counts, n_trials }
}
