use rand::Rng;
use rand_distr::{Distribution, Geometric};

pub const QUANTUM: f64 = 0.1;
pub const FLIP_PROB: f64 = 0.001;

/// Round-robin CPU sharing with a birth-death number of competing
/// processes. Each quantum the count moves by ±1 with probability
/// `flip_prob`, the direction being a fair coin; moves outside
/// `[0, m_max]` are discarded, which keeps the stationary law uniform.
#[derive(Debug, Clone, PartialEq)]
pub struct CpuContention {
    m_max: u32,
    level: u32,
    flip_prob: f64,
    quantum: f64,
}

impl CpuContention {
    /// Starts from a uniform level on `0..=m_max`.
    pub fn new<R: Rng + ?Sized>(m_max: u32, flip_prob: f64, quantum: f64, rng: &mut R) -> Self {
        let level = if m_max == 0 { 0 } else { rng.random_range(0..=m_max) };
        CpuContention { m_max, level, flip_prob, quantum }
    }

    pub fn with_level(m_max: u32, level: u32) -> Self {
        CpuContention { m_max, level: level.min(m_max), flip_prob: 0.0, quantum: QUANTUM }
    }

    pub fn m_max(&self) -> u32 {
        self.m_max
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn speed(&self) -> f64 {
        1.0 / (1.0 + f64::from(self.level))
    }

    /// Seconds until the next flip, a whole number of quanta drawn in one
    /// geometric step. `None` when the level can never change.
    pub fn next_flip_delay<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<f64> {
        if self.m_max == 0 || !(self.flip_prob > 0.0) {
            return None;
        }
        if self.flip_prob >= 1.0 {
            return Some(self.quantum);
        }
        let failures = Geometric::new(self.flip_prob).expect("probability in (0,1)").sample(rng);
        Some((failures as f64 + 1.0) * self.quantum)
    }

    pub fn flip<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        if rng.random_bool(0.5) {
            if self.level < self.m_max {
                self.level += 1;
            }
        } else if self.level > 0 {
            self.level -= 1;
        }
    }
}

/// Remaining nominal work after running `dt` seconds against
/// `n_competing` other processes.
pub fn advance_execution(remaining: f64, dt: f64, n_competing: u32) -> f64 {
    (remaining - dt / (1.0 + f64::from(n_competing))).max(0.0)
}

/// Wall time needed to finish `remaining` seconds of nominal work.
pub fn time_to_finish(remaining: f64, n_competing: u32) -> f64 {
    remaining * (1.0 + f64::from(n_competing))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn nominal_and_contended_speed() {
        assert_eq!(time_to_finish(75.0, 0), 75.0);
        assert_eq!(time_to_finish(75.0, 3), 300.0);
        assert_eq!(advance_execution(75.0, 150.0, 3), 37.5);
        assert_eq!(advance_execution(1.0, 10.0, 0), 0.0);
    }

    #[test]
    fn zero_probability_never_flips() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = CpuContention::new(5, 0.0, QUANTUM, &mut rng);
        assert_eq!(c.next_flip_delay(&mut rng), None);
        assert_eq!(CpuContention::new(0, FLIP_PROB, QUANTUM, &mut rng).next_flip_delay(&mut rng), None);
    }

    #[test]
    fn level_stays_in_range_and_is_near_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut c = CpuContention::new(3, FLIP_PROB, QUANTUM, &mut rng);
        let mut hist = [0u32; 4];
        for _ in 0..200_000 {
            c.flip(&mut rng);
            assert!(c.level() <= 3);
            hist[c.level() as usize] += 1;
        }
        for h in hist {
            assert!((f64::from(h) / 200_000.0 - 0.25).abs() < 0.02, "{hist:?}");
        }
    }

    #[test]
    fn flip_delays_have_geometric_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = CpuContention::with_level(3, 1);
        assert_eq!(c.next_flip_delay(&mut rng), None);
        let c = CpuContention { flip_prob: FLIP_PROB, ..c };
        let n = 20_000;
        let mean = (0..n).map(|_| c.next_flip_delay(&mut rng).unwrap()).sum::<f64>() / f64::from(n);
        assert!((mean - 100.0).abs() < 3.0, "{mean}");
    }
}
