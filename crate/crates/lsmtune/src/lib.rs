//! A desk-scale LSM-tree key-value store with adaptive compaction and write
//! stalls, plus the workload generator and benchmark driver around it.
//!
//! - [`engine`]: the store itself, with pluggable compaction policies.
//! - [`sst`], [`bloom`], [`memtable`], [`manifest`]: on-disk and in-memory
//!   structures.
//! - [`fs`]: file-system abstraction with in-memory and fault-injecting
//!   implementations.
//! - [`workload`], [`bench`]: operation streams and benchmark runs.
//! - [`simulate`]: the analytical model run without an engine.
//! - [`corpus`]: tiny-instance fixtures for the exhaustive oracle.

pub mod bench;
pub mod bloom;
pub mod config;
pub mod corpus;
pub mod engine;
pub mod error;
pub mod fs;
pub mod manifest;
pub mod memtable;
pub mod simulate;
pub mod sst;
pub mod stats;
pub mod workload;

pub use config::{EngineConfig, PolicyKind, SearchSettings};
pub use engine::{CompactionRecord, Engine, EngineMetrics};
pub use error::{Error, Result};
