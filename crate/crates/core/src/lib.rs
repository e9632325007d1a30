//! Behavioural flow analysis for decoded blockchain event logs.
//!
//! The crate is organized as a pipeline: [`ingest`] builds a property graph
//! from decoded transactions, [`sequence`] extracts per-address and per-NFT
//! event sequences, [`action`] synthesizes the action catalogue and the
//! behaviour graph, [`flow`] cuts per-user flows out of it, [`embed`] turns
//! flows into vectors, [`cluster`] groups them and [`profile`] characterizes
//! each group. [`synthgen`] produces datasets with planted ground truth and
//! [`pipeline`] wires everything together.

pub mod action;
pub mod cluster;
pub mod config;
pub mod embed;
pub mod error;
pub mod export;
pub mod flow;
pub mod ingest;
mod lineio;
pub mod pipeline;
pub mod profile;
pub mod sequence;
pub mod synthgen;

pub use error::StoreError;
