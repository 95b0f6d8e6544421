//! Chained BFT replication with an asynchronous fallback view-change.
//!
//! The crate is split into the protocol data model ([`types`]), mock
//! threshold authenticators and the common coin ([`crypto`]), the per-replica
//! state machine ([`replica`]), a deterministic discrete-event network
//! ([`simnet`]), post-hoc checkers and metrics ([`analysis`]) and the
//! scenario file format used by the command-line harness ([`scenario`]).

pub mod crypto;
pub mod types;
pub mod replica;
pub mod simnet;
pub mod analysis;
pub mod scenario;
