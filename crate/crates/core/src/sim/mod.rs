//! Deterministic discrete-event simulation of service provisioning over a
//! contact trace.
//!
//! Contacts come from the trace. Requests appear at random seekers after
//! the warm-up and are planned by one policy per run. Data moves in FIFO
//! order per directed pair, only while the pair is in contact, sharing
//! each node's radio capacity, and providers execute one component at a
//! time under a fluctuating CPU load. Every source of randomness is a
//! named substream of the seed, so runs that differ only in the policy
//! see the same requests, execution draws and contention.

pub mod bandwidth;
pub mod config;
pub mod cpu;
mod engine;
pub mod event;
pub mod record;
pub mod time;

pub use bandwidth::step_bandwidth_allocation;
pub use config::{PolicySpec, SimConfig, SimError};
pub use cpu::{advance_execution, CpuContention};
pub use engine::{run, ExecEntry, Purpose, SimOutput, TransferSegment};
pub use record::{LegPhases, LegRecord, Phases, RequestRecord};
pub use time::SimTime;
