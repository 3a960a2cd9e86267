//! Chains, quorums, tree turtles, and their composition into state machine
//! replication, with a deterministic simulator to run and check it all.

pub mod bft;
pub mod chain;
pub mod explore;
pub mod cli;
pub mod harness;
pub mod leader;
pub mod netsim;
pub mod quorum;
pub mod replica;
pub mod smr;
pub mod turtle;
pub mod trace;
pub mod wire;
