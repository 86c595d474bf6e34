//! Service composition in opportunistic networks.
//!
//! Nodes meet intermittently, offer typed data-processing services to each
//! other and delegate multi-step tasks along chains of providers. This
//! crate holds the building blocks:
//!
//! * [`knowledge`]: per-node statistics about peers and the services they
//!   advertise,
//! * [`model`]: closed-form estimates of end-to-end provisioning time,
//! * [`composition`]: service graphs and weighted provider graphs, with
//!   shortest and ranked path search,
//! * [`policies`]: the planners that pick a composition,
//! * [`sim`]: a deterministic discrete-event simulator over a contact
//!   trace,
//! * [`trace`]: contact-trace parsing, generation and statistics.

pub mod composition;
pub mod ids;
pub mod knowledge;
pub mod model;
pub mod policies;
pub mod rng;
pub mod sim;
pub mod trace;

pub use ids::{NodeId, ServiceId, MAX_TYPE};
