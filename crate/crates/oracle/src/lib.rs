//! Brute-force Monte-Carlo samplers used to check closed-form delay
//! formulas.
//!
//! Everything here simulates the underlying stochastic processes directly:
//! an alternating on-off contact channel with exponential periods and a
//! FIFO batch-arrival queue fed by Lindley's recursion. The crate has no
//! knowledge of any closed form.
//!
//! Trials are split into a fixed number of chunks, each with its own
//! substream of a xoshiro256++ generator (obtained with `jump`), so results
//! depend only on the seed and never on the number of worker threads.

mod channel;
mod queue;
mod single;
mod stats;

pub use channel::{
    mc_interruption_count, mc_transfer_time, mc_transfer_time_short_first_contact, mc_wait_for_contact,
    ChannelState, CountDistribution, OnOffChannel, StartPhase,
};
pub use queue::{mc_batch_queue, BatchDist, QueueResult, QueueSampler, QueueSpec, ServiceDist};
pub use single::{mc_single_service, SingleServiceResult, SingleServiceSpec};
pub use stats::{OracleResult, Welford};

/// Number of independent chunks a Monte-Carlo run is split into.
pub const CHUNKS: usize = 32;
