//! Simulation toolkit for federated learning under local differential privacy.
//!
//! The library is organised around a single randomized-response style
//! mechanism for real-valued weights ([`mechanism`]), per-layer range
//! policies that adapt to the observed weight scale ([`ranges`]), a
//! split-and-shuffle reporting channel that detaches weight reports from
//! their senders ([`shuffle`]), a small from-scratch MLP ([`model`]), the
//! federated orchestration loop that ties these together ([`federation`]),
//! and a statistical verification harness that checks the closed-form
//! guarantees against Monte Carlo evidence ([`analysis`]).
//!
//! All randomness flows through explicitly seeded ChaCha generators (see
//! [`seeds`]); every public entry point is deterministic for a fixed seed.

pub mod analysis;
pub mod data;
pub mod error;
pub mod federation;
pub mod mechanism;
pub mod model;
pub mod ranges;
pub mod seeds;
pub mod shuffle;

pub use error::{Error, Result};
