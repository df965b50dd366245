//! Seeded, reproducible simulation of a cyclic bus line under three
//! headway-control policies: no control, stop-skipping, and modular
//! bus-splitting.
//!
//! The crate is organized bottom-up:
//!
//! - [`domain`]: line configuration, quasi-homogeneous line synthesis, and
//!   the closed-form fleet-sizing relations.
//! - [`rng`]: keyed random substreams making every draw independent of event
//!   interleaving and of the active policy.
//! - [`engine`]: the stop-visit simulation kernel and its output log.
//! - [`policies`]: the stop-skipping and bus-splitting control laws.
//! - [`metrics`]: travel-time components, weighted cost, bunching overhead,
//!   headway MAPE, and operational statistics.
//! - [`experiments`]: seeded Monte Carlo iterations and parameter sweeps.

pub mod curves;
pub mod domain;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod policies;

pub mod rng;
