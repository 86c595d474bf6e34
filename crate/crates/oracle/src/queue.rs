use rand::Rng;
use rand_distr::{Distribution, Exp1, Geometric, Poisson};
use rand_xoshiro::Xoshiro256PlusPlus;
use rand::SeedableRng;
use serde::Serialize;

use crate::stats::{OracleResult, Welford};

/// Per-customer service time law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ServiceDist {
    Exponential { mean: f64 },
    Deterministic { value: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl ServiceDist {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ServiceDist::Exponential { mean } => {
                let e: f64 = Exp1.sample(rng);
                e * mean
            }
            ServiceDist::Deterministic { value } => value,
            ServiceDist::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            ServiceDist::Exponential { mean } => mean,
            ServiceDist::Deterministic { value } => value,
            ServiceDist::Uniform { lo, hi } => 0.5 * (lo + hi),
        }
    }

    pub fn second_moment(&self) -> f64 {
        match *self {
            ServiceDist::Exponential { mean } => 2.0 * mean * mean,
            ServiceDist::Deterministic { value } => value * value,
            ServiceDist::Uniform { lo, hi } => (lo * lo + lo * hi + hi * hi) / 3.0,
        }
    }
}

/// Number of customers arriving together.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum BatchDist {
    Fixed(u32),
    /// Geometric on {1, 2, ...} with the given mean (at least 1).
    Geometric { mean: f64 },
    /// Poisson on {0, 1, ...}; empty batches carry no customers.
    Poisson { mean: f64 },
}

impl BatchDist {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match *self {
            BatchDist::Fixed(n) => u64::from(n),
            BatchDist::Geometric { mean } => {
                if mean <= 1.0 {
                    1
                } else {
                    1 + Geometric::new(1.0 / mean).expect("valid geometric").sample(rng)
                }
            }
            BatchDist::Poisson { mean } => Poisson::new(mean).expect("valid poisson").sample(rng) as u64,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            BatchDist::Fixed(n) => f64::from(n),
            BatchDist::Geometric { mean } => mean.max(1.0),
            BatchDist::Poisson { mean } => mean,
        }
    }

    pub fn second_moment(&self) -> f64 {
        match *self {
            BatchDist::Fixed(n) => f64::from(n) * f64::from(n),
            BatchDist::Geometric { mean } => {
                let m = mean.max(1.0);
                let p = 1.0 / m;
                (2.0 - p) / (p * p)
            }
            BatchDist::Poisson { mean } => mean * mean + mean,
        }
    }
}

/// FIFO queue with Poisson batch arrivals at `batch_rate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QueueSpec {
    pub batch_rate: f64,
    pub batch: BatchDist,
    pub service: ServiceDist,
}

impl QueueSpec {
    pub fn load(&self) -> f64 {
        self.batch_rate * self.batch.mean() * self.service.mean()
    }
}

/// Streams customers of a queue in arrival order via Lindley's recursion.
#[derive(Debug, Clone)]
pub struct QueueSampler {
    spec: QueueSpec,
    work: f64,
    left_in_batch: u64,
}

impl QueueSampler {
    pub fn new(spec: QueueSpec) -> Self {
        QueueSampler { spec, work: 0.0, left_in_batch: 0 }
    }

    /// Returns the next customer's waiting time and service time.
    pub fn next_customer<R: Rng + ?Sized>(&mut self, rng: &mut R) -> (f64, f64) {
        while self.left_in_batch == 0 {
            let e: f64 = Exp1.sample(rng);
            self.work = (self.work - e / self.spec.batch_rate).max(0.0);
            self.left_in_batch = self.spec.batch.sample(rng);
        }
        self.left_in_batch -= 1;
        let wait = self.work;
        let service = self.spec.service.sample(rng);
        self.work += service;
        (wait, service)
    }
}

/// Means over customers of a one-queue simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QueueResult {
    /// Time from arrival to start of service.
    pub wait: OracleResult,
    /// Time from arrival to end of service.
    pub sojourn: OracleResult,
}

const QUEUE_BATCHES: u64 = 20;

/// Simulates `n_customers` customers after discarding a warm-up of 5%
/// (at least 1000) and reports batch-means standard errors over 20
/// consecutive batches.
pub fn mc_batch_queue(spec: &QueueSpec, n_customers: u64, seed: u64) -> QueueResult {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut q = QueueSampler::new(*spec);
    let warm = (n_customers / 20).max(1000);
    for _ in 0..warm {
        q.next_customer(&mut rng);
    }
    let per = (n_customers / QUEUE_BATCHES).max(1);
    let mut wait_batches = Welford::new();
    let mut soj_batches = Welford::new();
    let mut wait_all = Welford::new();
    let mut soj_all = Welford::new();
    for _ in 0..QUEUE_BATCHES {
        let mut w = Welford::new();
        let mut s = Welford::new();
        for _ in 0..per {
            let (wait, service) = q.next_customer(&mut rng);
            w.push(wait);
            s.push(wait + service);
        }
        wait_batches.push(w.mean());
        soj_batches.push(s.mean());
        wait_all.merge(&w);
        soj_all.merge(&s);
    }
    let n = wait_all.count();
    let se = |b: &Welford| (b.variance() / QUEUE_BATCHES as f64).sqrt();
    QueueResult {
        wait: OracleResult { estimate: wait_all.mean(), std_error: se(&wait_batches), n_trials: n },
        sojourn: OracleResult { estimate: soj_all.mean(), std_error: se(&soj_batches), n_trials: n },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mm1_wait_matches_textbook_value() {
        // M/M/1 with load 0.5 and unit mean service waits 1 on average.
        let spec = QueueSpec {
            batch_rate: 0.5,
            batch: BatchDist::Fixed(1),
            service: ServiceDist::Exponential { mean: 1.0 },
        };
        let r = mc_batch_queue(&spec, 400_000, 11);
        assert!((r.wait.estimate - 1.0).abs() < 4.0 * r.wait.std_error, "{r:?}");
        assert!((r.sojourn.estimate - 2.0).abs() < 4.0 * r.sojourn.std_error, "{r:?}");
    }

    #[test]
    fn batch_moments() {
        let g = BatchDist::Geometric { mean: 3.0 };
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(2);
        let n = 200_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let x = g.sample(&mut rng) as f64;
            s1 += x;
            s2 += x * x;
        }
        assert!((s1 / n as f64 - g.mean()).abs() < 0.05);
        assert!((s2 / n as f64 - g.second_moment()).abs() < 0.5);
    }
}
