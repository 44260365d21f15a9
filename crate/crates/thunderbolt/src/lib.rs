//! Threads, files and the command line for the sharded DAG protocol in
//! `thunderbolt-core`.
//!
//! - [`threaded`]: the dependency-graph executor on OS threads
//! - [`baselines`]: optimistic and no-wait locking executors to compare against
//! - [`backend`]: parallel validation and cross-shard execution
//! - [`config`], [`report`], [`workload_io`]: file formats
//! - [`bench`], [`fuzz`], [`scenario`]: what the `thunderbolt` binary runs

pub mod backend;
pub mod baselines;
pub mod bench;
pub mod config;
pub mod fuzz;
pub mod report;
pub mod scenario;
pub mod threaded;
pub mod workload_io;
