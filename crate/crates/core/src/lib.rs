//! Simulator and learners for distributed online convex optimization with
//! joint regret under bit-limited gossip.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adversary;
pub mod config;
pub mod encoding;
pub mod graph;
pub mod learners;
pub mod metrics;
pub mod partition;
pub mod rng;
pub mod sim;
pub mod special;
pub mod transport;
pub mod verify;
