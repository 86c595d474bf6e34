//! Closed-form expectations of the phases of a delegated service execution.
//!
//! A seeker `h` hands a task to a provider `j` over an intermittent link:
//! it may have to wait for a contact (W), sends the input (B), the task
//! queues (DQ) and runs (DS) at the provider, and the output comes back
//! (θ). Contacts and inter-contacts are exponential with rates δ and δ′,
//! data moves at V bytes/s while in contact, and the provider is an
//! M^X/G/1 queue. Which expression applies to B and θ depends on whether
//! the first contact outlives the whole interaction (case 1), ends after
//! the input made it across (case 2) or ends during the input (case 3).

mod assemble;
mod phases;
mod pmf;

pub use assemble::{estimate_composition, estimate_single, CompositionLeg, PhaseEstimate};
pub use phases::{
    expected_b_case3, expected_b_total, expected_queue_delay, expected_theta_case2, expected_theta_case2a,
    expected_theta_case2b, expected_theta_case2c, expected_theta_case3, expected_theta_composition,
    expected_theta_single, expected_wait, prob_case2a, prob_cases, steady_state_split, CaseProbabilities,
};
pub use pmf::{pmf_n2a, pmf_n2b, pmf_rnic};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("{name} must be non-negative, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("second moment {d2} is below the squared mean {d}^2")]
    InconsistentMoments { d: f64, d2: f64 },
    #[error("unstable queue: load {rho} >= 1")]
    UnstableQueue { rho: f64 },
    #[error("a composition needs at least one leg")]
    EmptyComposition,
}

fn positive(name: &'static str, value: f64) -> Result<f64, ModelError> {
    if value > 0.0 {
        Ok(value)
    } else {
        Err(ModelError::NonPositive { name, value })
    }
}

fn non_negative(name: &'static str, value: f64) -> Result<f64, ModelError> {
    if value >= 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(ModelError::Negative { name, value })
    }
}

/// Contact rate δ, inter-contact rate δ′ and throughput V of one link.
/// Infinite values are accepted as limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams {
    delta: f64,
    delta_prime: f64,
    throughput: f64,
}

impl LinkParams {
    pub fn new(delta: f64, delta_prime: f64, throughput: f64) -> Result<Self, ModelError> {
        Ok(LinkParams {
            delta: positive("delta", delta)?,
            delta_prime: positive("delta_prime", delta_prime)?,
            throughput: positive("throughput", throughput)?,
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn delta_prime(&self) -> f64 {
        self.delta_prime
    }

    pub fn throughput(&self) -> f64 {
        self.throughput
    }

    /// δ/δ′
    fn ratio(&self) -> f64 {
        self.delta / self.delta_prime
    }
}

/// Queueing and execution statistics of one service at one provider.
///
/// `l2` is the second factorial moment E[L(L−1)] of the batch size and
/// `d2` the raw second moment of the execution time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProviderParams {
    lambda: f64,
    l: f64,
    l2: f64,
    d: f64,
    d2: f64,
}

impl ProviderParams {
    pub fn new(lambda: f64, l: f64, l2: f64, d: f64, d2: f64) -> Result<Self, ModelError> {
        non_negative("lambda", lambda)?;
        positive("l", l)?;
        non_negative("l2", l2)?;
        positive("d", d)?;
        non_negative("d2", d2)?;
        if !d.is_finite() {
            return Err(ModelError::Negative { name: "d", value: d });
        }
        if d2 < d * d * (1.0 - 1e-12) {
            return Err(ModelError::InconsistentMoments { d, d2 });
        }
        Ok(ProviderParams { lambda, l, l2, d, d2 })
    }

    /// Builds parameters from the raw batch-size moments E[L] and E[L²].
    pub fn from_raw_batch_moments(lambda: f64, l: f64, l2_raw: f64, d: f64, d2: f64) -> Result<Self, ModelError> {
        Self::new(lambda, l, (l2_raw - l).max(0.0), d, d2)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn l(&self) -> f64 {
        self.l
    }

    pub fn l2(&self) -> f64 {
        self.l2
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn d2(&self) -> f64 {
        self.d2
    }

    pub fn mu(&self) -> f64 {
        1.0 / self.d
    }

    pub fn rho(&self) -> f64 {
        self.lambda * self.l * self.d
    }

    pub fn is_stable(&self) -> bool {
        self.rho() < 1.0
    }

    /// Rate of the exponential sojourn μ(1−ρ), or an error when unstable.
    fn sojourn_rate(&self) -> Result<f64, ModelError> {
        let rho = self.rho();
        if rho >= 1.0 {
            Err(ModelError::UnstableQueue { rho })
        } else {
            Ok(self.mu() * (1.0 - rho))
        }
    }
}

/// Bytes to move toward the provider (`k`) and back (`kprime`), each
/// including whatever is already queued on that link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferSizes {
    k: f64,
    kprime: f64,
}

impl TransferSizes {
    pub fn new(k: f64, kprime: f64) -> Result<Self, ModelError> {
        Ok(TransferSizes { k: non_negative("k", k)?, kprime: non_negative("kprime", kprime)? })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn kprime(&self) -> f64 {
        self.kprime
    }
}
