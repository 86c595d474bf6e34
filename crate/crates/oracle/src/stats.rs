use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::Serialize;

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleResult {
    pub estimate: f64,
    pub std_error: f64,
    pub n_trials: u64,
}

impl OracleResult {
    /// Standardised distance of `value` from the estimate.
    pub fn z_score(&self, value: f64) -> f64 {
        if self.std_error > 0.0 {
            (self.estimate - value) / self.std_error
        } else if self.estimate == value {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Streaming mean and variance, mergeable across chunks.
#[derive(Debug, Clone, Copy, Default)]
pub struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Welford) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * self.n as f64 * other.n as f64 / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn result(&self) -> OracleResult {
        let se = if self.n < 2 { f64::INFINITY } else { (self.variance() / self.n as f64).sqrt() };
        OracleResult { estimate: self.mean, std_error: se, n_trials: self.n }
    }
}

/// Generators for each chunk, derived from one seed by repeated jumps.
pub(crate) fn chunk_rngs(seed: u64, chunks: usize) -> Vec<Xoshiro256PlusPlus> {
    let mut base = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut out = Vec::with_capacity(chunks);
    for _ in 0..chunks {
        out.push(base.clone());
        base.jump();
    }
    out
}

/// Trials assigned to chunk `i` when `n` trials are split `chunks` ways.
pub(crate) fn chunk_len(n: u64, chunks: usize, i: usize) -> u64 {
    let c = chunks as u64;
    n / c + u64::from((i as u64) < n % c)
}

/// Runs `f` over every chunk in parallel and returns the per-chunk outputs
/// in chunk order.
pub(crate) fn par_chunks<T, F>(n: u64, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut Xoshiro256PlusPlus, u64) -> T + Sync,
{
    let rngs = chunk_rngs(seed, crate::CHUNKS);
    rngs.into_par_iter()
        .enumerate()
        .map(|(i, mut rng)| f(&mut rng, chunk_len(n, crate::CHUNKS, i)))
        .collect()
}

/// Convenience wrapper for the common case of one scalar per trial.
pub(crate) fn mean_of_trials<F>(n: u64, seed: u64, trial: F) -> OracleResult
where
    F: Fn(&mut Xoshiro256PlusPlus) -> f64 + Sync,
{
    let parts = par_chunks(n, seed, |rng, len| {
        let mut w = Welford::new();
        for _ in 0..len {
            w.push(trial(rng));
        }
        w
    });
    let mut total = Welford::new();
    for p in &parts {
        total.merge(p);
    }
    total.result()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn welford_merge_matches_sequential() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 0.5).collect();
        let mut all = Welford::new();
        xs.iter().for_each(|&x| all.push(x));
        let mut a = Welford::new();
        let mut b = Welford::new();
        xs[..333].iter().for_each(|&x| a.push(x));
        xs[333..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        assert_eq!(a.count(), all.count());
        assert!((a.mean() - all.mean()).abs() < 1e-12);
        assert!((a.variance() - all.variance()).abs() < 1e-9);
    }

    #[test]
    fn chunk_lengths_cover_total() {
        for n in [0u64, 1, 31, 32, 33, 1_000_003] {
            let s: u64 = (0..crate::CHUNKS).map(|i| chunk_len(n, crate::CHUNKS, i)).sum();
            assert_eq!(s, n);
        }
    }
}
