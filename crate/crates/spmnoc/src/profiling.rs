//! Profiling outputs: run reports, latency statistics and request traces.
//!
//! Reports serialize to JSON with a fixed field order and integer-exact
//! counter values, so two runs with the same seed and configuration produce
//! byte-identical files. Floating-point summary values (means, CVs) are
//! derived from those integers at the end of the run and are therefore
//! equally deterministic.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::remap::coefficient_of_variation;
use crate::request::AccessKind;
use crate::{Cycle, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Latency distribution summary. Percentiles use the nearest-rank method on
/// the exact sample set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct LatencyStats {
    pub samples: u64,
    pub mean: f64,
    pub p50: u64,
    pub p99: u64,
    pub max: u64,
}

/// Collects latency samples and reduces them to [`LatencyStats`].
#[derive(Debug, Clone, Default)]
pub struct LatencyCollector {
    samples: Vec<u64>,
}

impl LatencyCollector {
    pub fn push(&mut self, v: u64) {
        self.samples.push(v);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn stats(&self) -> LatencyStats {
        if self.samples.is_empty() {
            return LatencyStats::default();
        }
        let mut sorted = self.samples.clone();
        sorted.sort_unstable();
        let n = sorted.len();
        let rank = |p: f64| -> u64 {
            let idx = ((p / 100.0) * n as f64).ceil() as usize;
            sorted[idx.clamp(1, n) - 1]
        };
        LatencyStats {
            samples: n as u64,
            mean: sorted.iter().sum::<u64>() as f64 / n as f64,
            p50: rank(50.0),
            p99: rank(99.0),
            max: *sorted.last().unwrap(),
        }
    }
}

/// Cycle partition totals across all PEs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct StallTotals {
    pub active: u64,
    pub lsu_full: u64,
    pub load_use: u64,
    pub barrier: u64,
    pub idle: u64,
}

impl StallTotals {
    pub fn sum(&self) -> u64 {
        self.active + self.lsu_full + self.load_use + self.barrier + self.idle
    }
}

/// Aggregated interconnect counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct NetworkTotals {
    /// Requests and responses granted through any arbitration point.
    pub grants: u64,
    /// Grants that beat at least one other candidate in the same cycle.
    pub conflicts: u64,
    /// Cycles eligible heads waited on busy or contended outputs.
    pub blocked_cycles: u64,
    /// Cycles output ports spent occupied by transfers.
    pub busy_cycles: u64,
    pub queue_enqueues: u64,
    pub max_queue_occupancy: u32,
}

/// Per-channel load summary of the inter-group layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ChannelReport {
    /// Busy cycles per NoC channel, request plus response networks.
    pub totals: Vec<u64>,
    /// Population-CV of `totals`.
    pub spatial_cv: f64,
    /// Spatial CV inside consecutive fixed-length windows.
    pub window_cycles: u64,
    pub per_window_cv: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct PeReport {
    pub pe: u32,
    pub reads: u64,
    pub writes: u64,
    pub atomics: u64,
    pub responses: u64,
    pub active: u64,
    pub lsu_full: u64,
    pub load_use: u64,
    pub barrier: u64,
    pub idle: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct BankReport {
    pub bank: u32,
    pub accesses: u64,
    pub conflict_wait_cycles: u64,
    pub response_blocked_cycles: u64,
}

/// Full run report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub schema_version: u32,
    /// SHA-256 over the canonical configuration, workload and seed.
    pub config_digest: String,
    pub seed: u64,
    /// Number of simulated cycles (last PE activity happens at
    /// `total_cycles - 1`; trailing bookkeeping events are excluded).
    pub total_cycles: u64,
    pub requests_issued: u64,
    pub responses_delivered: u64,
    pub reads: u64,
    pub writes: u64,
    pub atomics: u64,
    pub bank_accesses: u64,
    /// One-way request latency: issue to bank service start.
    pub request_latency: LatencyStats,
    /// Issue to response delivery.
    pub round_trip: LatencyStats,
    pub stalls: StallTotals,
    pub network: NetworkTotals,
    pub channels: ChannelReport,
    pub per_pe: Vec<PeReport>,
    pub per_bank: Vec<BankReport>,
}

impl ProfileReport {
    /// Deterministic pretty JSON rendering (field order fixed by the struct).
    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string())?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Conservation check: every issued request got exactly one response
    /// and one bank access, and the stall categories partition total time.
    pub fn self_check(&self, total_pes: u64) -> std::result::Result<(), String> {
        if self.requests_issued != self.responses_delivered {
            return Err(format!(
                "issued {} != responses {}",
                self.requests_issued, self.responses_delivered
            ));
        }
        if self.requests_issued != self.bank_accesses {
            return Err(format!(
                "issued {} != bank accesses {}",
                self.requests_issued, self.bank_accesses
            ));
        }
        if self.reads + self.writes + self.atomics != self.requests_issued {
            return Err("access-kind counts do not sum to issued".into());
        }
        let expect = total_pes * self.total_cycles;
        if self.stalls.sum() != expect {
            return Err(format!(
                "stall categories sum to {} but {} PEs x {} cycles = {expect}",
                self.stalls.sum(),
                total_pes,
                self.total_cycles
            ));
        }
        Ok(())
    }
}

/// One hop of a traced request through an arbitration or pipeline stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct HopRecord {
    /// Dense component id of the router or stage.
    pub component: u32,
    /// Cycles spent waiting for the grant at this hop.
    pub wait: u64,
    /// Zero-load cycles of the hop.
    pub base: u64,
    /// Cycles the hop's output stayed occupied by this transfer.
    pub duration: u64,
}

/// Life of one traced request, phase by phase.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub id: u64,
    pub pe: u32,
    pub kind: AccessKind,
    pub addr: u64,
    pub size: u32,
    /// Entered the PE's crossbar entry queue (issue cycle).
    pub enqueue: Cycle,
    /// First grant out of the entry queue.
    pub arbitrate: Cycle,
    /// Arrived at the destination bank's queue.
    pub dispatch: Cycle,
    /// Bank service started.
    pub serve: Cycle,
    /// Response delivered back to the PE.
    pub respond: Cycle,
    /// Final accumulated request-leg latency.
    pub latency: u64,
    /// Final request-leg duration (max hop occupancy).
    pub duration: u64,
    /// Request-leg hops, in traversal order.
    pub hops: Vec<HopRecord>,
}

pub const TRACE_CSV_HEADER: &str =
    "id,pe,op,addr,size,enqueue,arbitrate,dispatch,serve,respond,latency,duration";

/// Renders trace records as CSV (hop detail stays in the JSON/API form).
pub fn trace_to_csv(records: &[TraceRecord]) -> String {
    let mut out = String::with_capacity(64 * records.len() + 64);
    out.push_str(TRACE_CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},0x{:x},{},{},{},{},{},{},{},{}",
            r.id,
            r.pe,
            r.kind.letter(),
            r.addr,
            r.size,
            r.enqueue,
            r.arbitrate,
            r.dispatch,
            r.serve,
            r.respond,
            r.latency,
            r.duration
        );
    }
    out
}

/// Per-cycle count of contended grants at the tiles' inter-group ports;
/// used to locate congestion peaks over time.
#[derive(Debug, Clone, Default)]
pub struct ConflictSeries {
    counts: Vec<u32>,
}

impl ConflictSeries {
    pub fn bump(&mut self, cycle: Cycle) {
        let idx = cycle as usize;
        if self.counts.len() <= idx {
            self.counts.resize(idx + 1, 0);
        }
        self.counts[idx] += 1;
    }

    pub fn peak(&self) -> u32 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }
}

/// Builds the channel section from per-channel busy totals and windows.
pub fn channel_report(
    totals: Vec<u64>,
    window_cycles: u64,
    per_window_cv: Vec<f64>,
) -> ChannelReport {
    let spatial_cv = coefficient_of_variation(&totals);
    ChannelReport {
        totals,
        spatial_cv,
        window_cycles,
        per_window_cv,
    }
}
