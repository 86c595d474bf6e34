use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

pub const TICKS_PER_SECOND: u64 = 1_000_000;

/// Simulation clock in integer microseconds. Durations computed from
/// rates are rounded up, so nothing completes before it physically could.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const NEVER: SimTime = SimTime(u64::MAX);

    /// Rounds up to the next tick; negative values map to zero and
    /// unrepresentable ones to [`SimTime::NEVER`].
    pub fn from_secs_ceil(s: f64) -> SimTime {
        if s.is_nan() || s <= 0.0 {
            return SimTime::ZERO;
        }
        let ticks = (s * TICKS_PER_SECOND as f64).ceil();
        if ticks >= u64::MAX as f64 {
            SimTime::NEVER
        } else {
            SimTime(ticks as u64)
        }
    }

    pub fn secs(self) -> f64 {
        self.0 as f64 / TICKS_PER_SECOND as f64
    }

    pub fn since(self, earlier: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(earlier.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_add(rhs.0))
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        self.since(rhs)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}s", self.secs())
    }
}
