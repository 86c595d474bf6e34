use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Highest data type index. Services map an input type in `0..MAX_TYPE`
/// to a strictly larger output type in `1..=MAX_TYPE`.
pub const MAX_TYPE: u8 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid service type pair {input}->{output}")]
pub struct InvalidTypes {
    pub input: u8,
    pub output: u8,
}

/// A service is identified by the data type it consumes and the one it
/// produces. Ordering is by input, then output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ServiceId {
    input: u8,
    output: u8,
}

impl ServiceId {
    pub const MIN: ServiceId = ServiceId { input: 0, output: 0 };
    pub const MAX: ServiceId = ServiceId { input: u8::MAX, output: u8::MAX };

    pub fn new(input: u8, output: u8) -> Result<Self, InvalidTypes> {
        if input < output && output <= MAX_TYPE {
            Ok(ServiceId { input, output })
        } else {
            Err(InvalidTypes { input, output })
        }
    }

    pub fn input(self) -> u8 {
        self.input
    }

    pub fn output(self) -> u8 {
        self.output
    }

    /// Every valid service, in order.
    pub fn all() -> impl Iterator<Item = ServiceId> {
        (0..MAX_TYPE).flat_map(|i| (i + 1..=MAX_TYPE).map(move |o| ServiceId { input: i, output: o }))
    }
}

impl fmt::Display for ServiceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.input, self.output)
    }
}
