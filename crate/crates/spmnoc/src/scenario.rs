//! Scenario bundles (topology + workload + remapping + seed), run
//! orchestration, report assembly and the channel-assignment design-space
//! sweep.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::endpoints::{generate_plans, parse_trace, PlannedRequest, WorkloadSpec};
use crate::profiling::{
    channel_report, BankReport, NetworkTotals, PeReport, ProfileReport, StallTotals, TraceRecord,
    REPORT_SCHEMA_VERSION,
};
use crate::remap::{Assignment, RemapMode, RemapperConfig, DEFAULT_USAGE_WINDOW};
use crate::system::{Driver, Instrumentation, RunStatus, System};
use crate::topology::TopologyConfig;
use crate::{Cycle, Result};

/// A complete, self-describing simulation input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub topology: TopologyConfig,
    pub workload: WorkloadSpec,
    pub remap: RemapperConfig,
    pub seed: u64,
    /// Runs end with an explicit budget-exceeded status past this cycle.
    pub max_cycles: Cycle,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            name: "scenario".into(),
            topology: TopologyConfig::default(),
            workload: WorkloadSpec::default(),
            remap: RemapperConfig::default(),
            seed: 0,
            max_cycles: 10_000_000,
        }
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let sc: Scenario = serde_json::from_str(text)?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario serializes");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<()> {
        self.topology.validate()?;
        self.workload.validate()
    }

    /// SHA-256 over the canonical JSON form; identifies a run's full input.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("scenario serializes");
        let hash = Sha256::digest(canonical.as_bytes());
        let mut hex = String::with_capacity(64);
        for b in hash {
            let _ = write!(hex, "{b:02x}");
        }
        hex
    }
}

/// Everything a finished (or budget-capped) run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub report: ProfileReport,
    /// Per-request traces in id order; empty unless tracing was on.
    pub traces: Vec<TraceRecord>,
    /// Peak per-cycle count of contended inter-group grants (0 unless the
    /// conflict series was on).
    pub conflict_peak: u32,
    pub conflict_total: u64,
}

/// Generates the workload and runs the scenario on the event-driven driver.
pub fn run_scenario(sc: &Scenario, instr: Instrumentation) -> Result<RunOutcome> {
    sc.validate()?;
    let plans = generate_plans(&sc.workload, &sc.topology, sc.seed)?;
    run_scenario_with_plans(sc, plans, instr)
}

/// Like [`run_scenario`] but with request plans parsed from trace text.
pub fn run_scenario_with_trace(
    sc: &Scenario,
    trace_text: &str,
    instr: Instrumentation,
) -> Result<RunOutcome> {
    sc.validate()?;
    let plans = parse_trace(trace_text, &sc.topology)?;
    run_scenario_with_plans(sc, plans, instr)
}

/// Runs prepared per-PE plans under the scenario's system configuration.
pub fn run_scenario_with_plans(
    sc: &Scenario,
    plans: Vec<Vec<PlannedRequest>>,
    instr: Instrumentation,
) -> Result<RunOutcome> {
    log::debug!(
        "running scenario '{}': seed {}, {} PEs, digest {}",
        sc.name,
        sc.seed,
        sc.topology.total_pes(),
        sc.digest()
    );
    let mut sys = System::new(
        sc.topology.clone(),
        sc.remap.clone(),
        plans,
        sc.workload.max_outstanding,
        sc.seed,
        Driver::Events,
        instr,
    )?;
    let status = sys.run(sc.max_cycles)?;
    if let RunStatus::BudgetExceeded { outstanding } = status {
        log::warn!(
            "scenario '{}' exceeded its {}-cycle budget with {} requests outstanding",
            sc.name,
            sc.max_cycles,
            outstanding
        );
    }
    let report = assemble_report(&sys, sc);
    let traces = sys
        .traces
        .take()
        .map(|m| m.into_values().collect())
        .unwrap_or_default();
    let (conflict_peak, conflict_total) = sys
        .conflicts_over_time
        .as_ref()
        .map_or((0, 0), |s| (s.peak(), s.total()));
    Ok(RunOutcome { status, report, traces, conflict_peak, conflict_total })
}

/// Reduces a finished system to its run report.
pub fn assemble_report(sys: &System, sc: &Scenario) -> ProfileReport {
    let mut stalls = StallTotals::default();
    let mut reads = 0u64;
    let mut writes = 0u64;
    let mut atomics = 0u64;
    let mut per_pe = Vec::with_capacity(sys.pes().len());
    for (i, pe) in sys.pes().iter().enumerate() {
        let c = pe.counters;
        reads += c.reads;
        writes += c.writes;
        atomics += c.atomics;
        stalls.active += c.active_cycles;
        stalls.lsu_full += c.lsu_full_cycles;
        stalls.load_use += c.load_use_cycles;
        stalls.barrier += c.barrier_cycles;
        stalls.idle += c.idle_cycles;
        per_pe.push(PeReport {
            pe: i as u32,
            reads: c.reads,
            writes: c.writes,
            atomics: c.atomics,
            responses: c.responses,
            active: c.active_cycles,
            lsu_full: c.lsu_full_cycles,
            load_use: c.load_use_cycles,
            barrier: c.barrier_cycles,
            idle: c.idle_cycles,
        });
    }

    let mut network = NetworkTotals::default();
    for r in sys.routers_all() {
        for port in &r.outputs {
            network.grants += port.stats.transfers;
            network.conflicts += port.stats.conflicts;
            network.blocked_cycles += port.stats.blocked_cycles;
            network.busy_cycles += port.stats.busy_cycles;
        }
        for q in &r.queues {
            network.queue_enqueues += q.stats.enqueues;
            network.max_queue_occupancy =
                network.max_queue_occupancy.max(u32::from(q.stats.max_occupancy));
        }
    }
    for st in sys.stages() {
        network.grants += st.stats.transfers;
        network.conflicts += st.stats.conflicts;
        network.busy_cycles += st.stats.busy_cycles;
    }

    let mut bank_accesses = 0u64;
    let mut per_bank = Vec::new();
    for (i, b) in sys.bank_stats().enumerate() {
        bank_accesses += b.accesses;
        per_bank.push(BankReport {
            bank: i as u32,
            accesses: b.accesses,
            conflict_wait_cycles: b.conflict_wait_cycles,
            response_blocked_cycles: b.response_blocked_cycles,
        });
    }

    ProfileReport {
        schema_version: REPORT_SCHEMA_VERSION,
        config_digest: sc.digest(),
        seed: sc.seed,
        total_cycles: sys.total_cycles(),
        requests_issued: sys.issued,
        responses_delivered: sys.delivered,
        reads,
        writes,
        atomics,
        bank_accesses,
        request_latency: sys.request_latency.stats(),
        round_trip: sys.round_trip.stats(),
        stalls,
        network,
        channels: channel_report(
            sys.usage.totals(),
            DEFAULT_USAGE_WINDOW,
            sys.usage.per_window_cv(),
        ),
        per_pe,
        per_bank,
    }
}

// ---------------------------------------------------------------------------
// Zero-load calibration
// ---------------------------------------------------------------------------

/// One calibration measurement against its analytic expectation.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroLoadCheck {
    pub label: String,
    pub measured: f64,
    pub expected: f64,
    pub tolerance: f64,
}

impl ZeroLoadCheck {
    pub fn passed(&self) -> bool {
        (self.measured - self.expected).abs() <= self.tolerance
    }
}

/// Measures the one-way zero-load latency (issue to bank arrival) of one
/// request from the first PE of `src_group` to bank 0 of
/// `(dst_group, dst_tile)`, with nothing else in flight.
pub fn measure_zero_load(
    topology: &TopologyConfig,
    src_group: u16,
    dst_group: u16,
    dst_tile: u16,
) -> Result<Cycle> {
    use crate::request::{AccessKind, BankLoc, WORD_BYTES};
    let mut plans = vec![Vec::new(); topology.total_pes() as usize];
    let pe = u32::from(src_group)
        * u32::from(topology.tiles_per_group)
        * u32::from(topology.pes_per_tile);
    let addr = topology
        .address_map()
        .compose(BankLoc { group: dst_group, tile: dst_tile, bank: 0, offset: 0 });
    plans[pe as usize].push(PlannedRequest {
        ready: 0,
        addr,
        kind: AccessKind::Read,
        size: WORD_BYTES,
        dependent: false,
        barrier_index: 0,
    });
    let sc = Scenario {
        topology: topology.clone(),
        max_cycles: 1_000_000,
        ..Scenario::default()
    };
    let out = run_scenario_with_plans(&sc, plans, Instrumentation { trace: true, conflict_series: false })?;
    let t = &out.traces[0];
    Ok(t.dispatch - t.enqueue)
}

/// Runs every zero-load anchor of `topology`: intra-tile, intra-group,
/// adjacent groups, and the mean over all ordered distinct group pairs,
/// each compared to the analytic value.
pub fn calibration_checks(topology: &TopologyConfig) -> Result<Vec<ZeroLoadCheck>> {
    use crate::topology::PathClass;
    topology.validate()?;
    let mut checks = Vec::new();
    let measured = measure_zero_load(topology, 0, 0, 0)? as f64;
    checks.push(ZeroLoadCheck {
        label: "intra-tile one-way".into(),
        measured,
        expected: topology.zero_load_for(PathClass::IntraTile) as f64,
        tolerance: 0.0,
    });
    if topology.tiles_per_group >= 2 {
        let measured = measure_zero_load(topology, 0, 0, 1)? as f64;
        checks.push(ZeroLoadCheck {
            label: "intra-group one-way".into(),
            measured,
            expected: topology.zero_load_for(PathClass::IntraGroup) as f64,
            tolerance: 0.0,
        });
    }
    if topology.groups >= 2 {
        let measured = measure_zero_load(topology, 0, 1, 0)? as f64;
        checks.push(ZeroLoadCheck {
            label: "adjacent-group one-way".into(),
            measured,
            expected: topology.zero_load_latency(0, 1) as f64,
            tolerance: 0.0,
        });
        let mut total = 0u64;
        let mut expected_total = 0u64;
        let mut pairs = 0u64;
        for src in 0..topology.groups {
            for dst in 0..topology.groups {
                if src == dst {
                    continue;
                }
                total += measure_zero_load(topology, src, dst, 0)?;
                expected_total += topology.zero_load_latency(src, dst);
                pairs += 1;
            }
        }
        checks.push(ZeroLoadCheck {
            label: format!("mean over {pairs} ordered group pairs"),
            measured: total as f64 / pairs as f64,
            expected: expected_total as f64 / pairs as f64,
            tolerance: 1e-9,
        });
    }
    Ok(checks)
}

// ---------------------------------------------------------------------------
// Channel-assignment design-space sweep
// ---------------------------------------------------------------------------

/// One channel-assignment configuration to evaluate.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub mode: RemapMode,
    pub partition_size: u16,
    pub assignment: Assignment,
}

impl SweepPoint {
    pub fn fixed() -> Self {
        SweepPoint { mode: RemapMode::Static, partition_size: 0, assignment: Assignment::Contiguous }
    }

    pub fn remap(partition_size: u16, assignment: Assignment) -> Self {
        SweepPoint { mode: RemapMode::Remap, partition_size, assignment }
    }
}

/// Result of evaluating one sweep point under one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub mode: RemapMode,
    pub partition_size: u16,
    pub assignment: Assignment,
    pub seed: u64,
    pub finished: bool,
    pub completion_cycles: Cycle,
    pub spatial_cv: f64,
    pub mean_latency: f64,
    pub p99_latency: u64,
}

pub const SWEEP_CSV_HEADER: &str =
    "mode,partition_size,assignment,seed,finished,completion_cycles,spatial_cv,mean_latency,p99_latency";

fn mode_label(mode: RemapMode) -> &'static str {
    match mode {
        RemapMode::Static => "static",
        RemapMode::Remap => "remap",
    }
}

fn assignment_label(a: &Assignment) -> &'static str {
    match a {
        Assignment::Contiguous => "contiguous",
        Assignment::Interleaved => "interleaved",
        Assignment::Custom(_) => "custom",
    }
}

/// Default palette: the fixed baseline plus power-of-two partition sizes in
/// both block shapes, capped at the channel count.
pub fn default_sweep_points(channels: u16) -> Vec<SweepPoint> {
    let mut points = vec![SweepPoint::fixed()];
    let mut k = 2u16;
    while k <= channels {
        points.push(SweepPoint::remap(k, Assignment::Contiguous));
        if k < channels {
            points.push(SweepPoint::remap(k, Assignment::Interleaved));
        }
        k *= 2;
    }
    points
}

/// Runs every point x seed combination of the sweep on `base`'s topology and
/// workload, overriding only the remapping configuration.
pub fn dse_sweep(base: &Scenario, points: &[SweepPoint], seeds: &[u64]) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(points.len() * seeds.len());
    for point in points {
        for &seed in seeds {
            let mut sc = base.clone();
            sc.seed = seed;
            sc.remap = RemapperConfig {
                mode: point.mode,
                partition_size: if point.mode == RemapMode::Static {
                    RemapperConfig::default().partition_size
                } else {
                    point.partition_size
                },
                assignment: point.assignment.clone(),
                schedule: sc.remap.schedule,
            };
            let outcome = run_scenario(&sc, Instrumentation::default())?;
            log::info!(
                "sweep point {}/k={}/{} seed {}: {} cycles, channel CV {:.4}",
                mode_label(point.mode),
                point.partition_size,
                assignment_label(&point.assignment),
                seed,
                outcome.report.total_cycles,
                outcome.report.channels.spatial_cv
            );
            rows.push(SweepRow {
                mode: point.mode,
                partition_size: point.partition_size,
                assignment: point.assignment.clone(),
                seed,
                finished: outcome.status == RunStatus::Finished,
                completion_cycles: outcome.report.total_cycles,
                spatial_cv: outcome.report.channels.spatial_cv,
                mean_latency: outcome.report.round_trip.mean,
                p99_latency: outcome.report.round_trip.p99,
            });
        }
    }
    Ok(rows)
}

/// Renders sweep rows as CSV with a fixed column set.
pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::with_capacity(64 * rows.len() + 64);
    out.push_str(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{:.6},{:.3},{}",
            mode_label(r.mode),
            r.partition_size,
            assignment_label(&r.assignment),
            r.seed,
            r.finished,
            r.completion_cycles,
            r.spatial_cv,
            r.mean_latency,
            r.p99_latency
        );
    }
    out
}

/// Best finished row by completion time (ties: lower spatial CV, then the
/// earlier row).
pub fn best_row(rows: &[SweepRow]) -> Option<&SweepRow> {
    rows.iter().filter(|r| r.finished).min_by(|a, b| {
        a.completion_cycles
            .cmp(&b.completion_cycles)
            .then(a.spatial_cv.total_cmp(&b.spatial_cv))
    })
}
