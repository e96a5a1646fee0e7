//! Event-driven timing simulator for hierarchical scratchpad-memory (SPM)
//! interconnects in many-core clusters.
//!
//! The simulated machine is a cluster of processing elements (PEs) sharing a
//! word-interleaved L1 scratchpad through a three-level interconnect:
//!
//! * **Tile**: a few PEs and SPM banks behind a local crossbar,
//! * **Group**: tiles joined by an intra-group crossbar,
//! * **Cluster**: groups joined by parallel narrow 2D-mesh networks
//!   (one request and one response network per tile injection port).
//!
//! Every arbiter in the hierarchy is an instance of one generic router
//! primitive ([`router`]) with configurable port counts, bandwidth, base
//! latency, routing policy and dispatch mode. Request paths are simulated
//! asynchronously (queued events, credit-based backpressure); response paths
//! inside a group are walked synchronously with busy-until bookkeeping.
//!
//! The crate also ships a brute-force per-cycle reference simulator
//! ([`oracle`]) used to validate the event-driven engine exactly, and a
//! design-space-exploration harness for the per-cycle channel remapper
//! ([`remap`]).

pub mod endpoints;
pub mod engine;
pub mod oracle;
pub mod profiling;
pub mod remap;
pub mod request;
pub mod rng;
pub mod router;
pub mod scenario;
pub mod system;
pub mod topology;

pub use request::{AccessKind, Request};
pub use scenario::{RunOutcome, Scenario};
pub use system::System;
pub use topology::TopologyConfig;

/// Simulation time in clock cycles.
pub type Cycle = u64;

/// Errors reported by configuration, workload loading and simulation itself.
#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("address 0x{addr:x} does not map to any bank: {reason}")]
    Unmapped { addr: u64, reason: String },
    #[error("workload error: {0}")]
    Workload(String),
    #[error("trace parse error at line {line}: {reason}")]
    TraceParse { line: usize, reason: String },
    #[error("scheduling rejected: {0}")]
    Schedule(String),
    #[error("simulation stalled at cycle {cycle} with {outstanding} outstanding requests")]
    Stalled { cycle: Cycle, outstanding: u64 },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SimError>;
