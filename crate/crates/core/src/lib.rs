//! Core of a sharded DAG execution protocol.
//!
//! Single-shard transactions are preplayed by each shard proposer through a
//! dependency-graph concurrency controller and validated after consensus;
//! cross-shard transactions are ordered by a round-based DAG and executed
//! deterministically after commit. Shift blocks rotate shard ownership
//! between DAG instances without stalling consensus.
//!
//! This crate is `no_std` (with `alloc`) and carries every algorithm plus a
//! deterministic discrete-event simulator. Threads, files and the command line
//! live in the companion `thunderbolt` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod check;
pub mod dag;
pub mod depgraph;
pub mod error;
pub mod executor;
pub mod hash;
pub mod log;
pub mod model;
pub mod oracle;
pub mod procedure;
pub mod reconfig;
pub mod replica;
pub mod scenario;
pub mod schedule;
pub mod shard;
pub mod sim;
pub mod state;
pub mod validate;
pub mod workload;

pub use error::{CcError, ModelError, PreplayError, SimError};
pub use model::{
    assign_shard, classify, Block, BlockKind, CertRef, Certificate, Conversion, CrossEntry, DagId, Key, ReplicaId,
    Round, ShardAssignment, ShardId, SinglePayload, Transaction, TxClass, TxId, Value,
};
pub use procedure::Procedure;
pub use schedule::{PreplayResult, ReadRecord, ReadSource, TxEffects};
pub use state::{State, StateView};
