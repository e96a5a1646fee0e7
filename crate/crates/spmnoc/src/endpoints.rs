//! Traffic endpoints: processing elements, SPM banks and synthetic
//! workloads.
//!
//! A workload is expanded up front into one request plan per PE. Generation
//! is a pure function of `(seed, pe, step)` — every request re-keys the
//! PRNG — so identical seeds reproduce identical plans regardless of
//! simulation order, and the per-cycle reference simulator sees exactly the
//! same traffic as the event-driven engine.
//!
//! The PE model issues at most one request per cycle, holds at most
//! `max_outstanding` requests in flight, and classifies every simulated
//! cycle into exactly one of: active (issued), lsu-full (window or crossbar
//! entry full), load-use (waiting for the response a marked-dependent
//! request needs), barrier, or idle. The categories partition total time
//! with no gap or overlap, which the profiling layer checks.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::request::{AccessKind, Request, WORD_BYTES};
use crate::rng::{mix_key, SplitMix64};
use crate::topology::TopologyConfig;
use crate::{Cycle, Result, SimError};

/// Address locality class used by patterns that only shape timing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AddrClass {
    #[default]
    Uniform,
    LocalTile,
    LocalGroup,
}

/// Synthetic traffic shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrafficPattern {
    /// Every request targets a uniformly random word of the whole SPM.
    UniformRandom,
    /// Banks of the initiator's own tile.
    LocalTile,
    /// A uniformly random other tile in the initiator's group.
    LocalGroup,
    /// `skew` of the traffic goes to `target_groups`, the rest is uniform
    /// over the remaining groups. `bank_stride > 1` restricts accesses to
    /// every stride-th bank, which collapses the static port interleaving
    /// onto a subset of channels (structured kernels do this).
    Hotspot {
        target_groups: Vec<u16>,
        skew: f64,
        #[serde(default = "one_u16")]
        bank_stride: u16,
    },
    /// Deterministic word-stride sweep: PE p touches words
    /// `p * pe_offset_words + k * stride_words`.
    Strided {
        stride_words: u64,
        #[serde(default)]
        pe_offset_words: u64,
    },
    /// Back-to-back runs of `burst_len` requests every `period` cycles,
    /// addresses drawn from `class`.
    Bursty {
        burst_len: u32,
        period: u32,
        #[serde(default)]
        class: AddrClass,
    },
    /// Requests replayed from a trace file (loaded separately).
    Trace,
}

fn one_u16() -> u16 {
    1
}

/// Full synthetic workload description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadSpec {
    pub pattern: TrafficPattern,
    /// Requests per PE; ignored when `total_requests` is given.
    pub requests_per_pe: u64,
    /// Optional total across all PEs (split evenly, rounded up).
    pub total_requests: Option<u64>,
    pub write_fraction: f64,
    pub atomic_fraction: f64,
    /// Probability that a request is marked dependent on its predecessor.
    pub dependence_fraction: f64,
    /// Minimum schedule gap between consecutive requests of one PE.
    pub think_cycles: u32,
    /// Data payload per access in bytes (word multiple).
    pub size_bytes: u32,
    /// Per-PE start offset: PE p begins at `p * stagger_stride`.
    pub stagger_stride: u32,
    /// Insert a cluster-wide barrier before every k-th request of each PE.
    pub barrier_every: Option<u32>,
    /// Maximum in-flight requests per PE.
    pub max_outstanding: u16,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            pattern: TrafficPattern::UniformRandom,
            requests_per_pe: 100,
            total_requests: None,
            write_fraction: 0.0,
            atomic_fraction: 0.0,
            dependence_fraction: 0.0,
            think_cycles: 0,
            size_bytes: WORD_BYTES,
            stagger_stride: 0,
            barrier_every: None,
            max_outstanding: 8,
        }
    }
}

impl WorkloadSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: WorkloadSpec = serde_json::from_str(text)
            .map_err(|e| SimError::Workload(format!("bad workload spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, f) in [
            ("write_fraction", self.write_fraction),
            ("atomic_fraction", self.atomic_fraction),
            ("dependence_fraction", self.dependence_fraction),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return Err(SimError::Workload(format!("{name} = {f} outside [0, 1]")));
            }
        }
        if self.size_bytes == 0 || !self.size_bytes.is_multiple_of(WORD_BYTES) {
            return Err(SimError::Workload(format!(
                "size_bytes = {} must be a positive word multiple",
                self.size_bytes
            )));
        }
        if self.max_outstanding == 0 {
            return Err(SimError::Workload("max_outstanding must be nonzero".into()));
        }
        if let TrafficPattern::Hotspot { skew, bank_stride, target_groups } = &self.pattern {
            if !(0.0..=1.0).contains(skew) {
                return Err(SimError::Workload(format!("hotspot skew {skew} outside [0, 1]")));
            }
            if target_groups.is_empty() {
                return Err(SimError::Workload("hotspot needs target groups".into()));
            }
            if *bank_stride == 0 {
                return Err(SimError::Workload("bank_stride must be nonzero".into()));
            }
        }
        if let TrafficPattern::Bursty { burst_len, period, .. } = self.pattern {
            if burst_len == 0 || period < burst_len {
                return Err(SimError::Workload(
                    "bursty pattern needs burst_len >= 1 and period >= burst_len".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn per_pe(&self, total_pes: u32) -> u64 {
        match self.total_requests {
            Some(total) => total.div_ceil(u64::from(total_pes.max(1))),
            None => self.requests_per_pe,
        }
    }
}

/// One request of a PE's plan, before issue.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlannedRequest {
    /// Earliest issue cycle.
    pub ready: Cycle,
    pub addr: u64,
    pub kind: AccessKind,
    pub size: u32,
    /// Must wait for the predecessor's response before issuing.
    pub dependent: bool,
    /// Number of barriers this PE must have passed before issuing.
    pub barrier_index: u32,
}

/// Expands a workload into per-PE request plans.
///
/// Every address is validated against the address map up front, so an
/// unreachable address fails here rather than hanging the simulation.
pub fn generate_plans(
    spec: &WorkloadSpec,
    cfg: &TopologyConfig,
    seed: u64,
) -> Result<Vec<Vec<PlannedRequest>>> {
    spec.validate()?;
    if let TrafficPattern::Trace = spec.pattern {
        return Err(SimError::Workload(
            "trace workloads must be loaded from a trace file".into(),
        ));
    }
    if let TrafficPattern::Hotspot { target_groups, bank_stride, .. } = &spec.pattern {
        if let Some(&g) = target_groups.iter().find(|&&g| g >= cfg.groups) {
            return Err(SimError::Workload(format!(
                "hotspot target group {g} outside 0..{}",
                cfg.groups
            )));
        }
        if !cfg.banks_per_tile.is_multiple_of(*bank_stride) {
            return Err(SimError::Workload(format!(
                "bank_stride {bank_stride} must divide banks_per_tile {}",
                cfg.banks_per_tile
            )));
        }
    }
    if let TrafficPattern::LocalGroup = spec.pattern {
        if cfg.tiles_per_group < 2 {
            return Err(SimError::Workload(
                "local-group traffic needs at least two tiles per group".into(),
            ));
        }
    }
    let map = cfg.address_map();
    let per_pe = spec.per_pe(cfg.total_pes());
    let mut plans = Vec::with_capacity(cfg.total_pes() as usize);
    for pe in 0..cfg.total_pes() {
        let mut plan = Vec::with_capacity(per_pe as usize);
        let mut barriers = 0u32;
        for step in 0..per_pe {
            if let Some(every) = spec.barrier_every {
                if step > 0 && step % u64::from(every) == 0 {
                    barriers += 1;
                }
            }
            let req = plan_one(spec, cfg, seed, pe, step, barriers)?;
            map.map(req.addr)?;
            plan.push(req);
        }
        plans.push(plan);
    }
    Ok(plans)
}

/// Generates request `step` of PE `pe`: a pure function of its arguments.
fn plan_one(
    spec: &WorkloadSpec,
    cfg: &TopologyConfig,
    seed: u64,
    pe: u32,
    step: u64,
    barrier_index: u32,
) -> Result<PlannedRequest> {
    let mut rng = SplitMix64::stream(seed, mix_key(&[0x7261_7474, u64::from(pe), step]));
    let ready = ready_cycle(spec, pe, step);
    let kind = if rng.next_f64() < spec.write_fraction {
        AccessKind::Write
    } else if rng.next_f64() < spec.atomic_fraction {
        AccessKind::Atomic
    } else {
        AccessKind::Read
    };
    let dependent = step > 0 && rng.next_f64() < spec.dependence_fraction;
    let addr = sample_addr(&spec.pattern, cfg, &mut rng, pe, step)?;
    Ok(PlannedRequest {
        ready,
        addr,
        kind,
        size: spec.size_bytes,
        dependent,
        barrier_index,
    })
}

/// Earliest issue cycle of request `step` on PE `pe`.
fn ready_cycle(spec: &WorkloadSpec, pe: u32, step: u64) -> Cycle {
    let offset = u64::from(spec.stagger_stride) * u64::from(pe);
    match spec.pattern {
        TrafficPattern::Bursty { burst_len, period, .. } => {
            let burst = step / u64::from(burst_len);
            let inside = step % u64::from(burst_len);
            offset + burst * u64::from(period) + inside
        }
        _ => offset + step * (1 + u64::from(spec.think_cycles)),
    }
}

fn sample_addr(
    pattern: &TrafficPattern,
    cfg: &TopologyConfig,
    rng: &mut SplitMix64,
    pe: u32,
    step: u64,
) -> Result<u64> {
    let map = cfg.address_map();
    let own_tile = (pe / u32::from(cfg.pes_per_tile)) % u32::from(cfg.tiles_per_group);
    let own_group = pe / (u32::from(cfg.pes_per_tile) * u32::from(cfg.tiles_per_group));
    let total_words = cfg.total_bytes() / u64::from(WORD_BYTES);
    let pick = |rng: &mut SplitMix64, bound: u64| rng.next_bounded(bound);
    let loc_addr = |group: u16, tile: u16, bank: u16, offset: u32| {
        map.compose(crate::request::BankLoc { group, tile, bank, offset })
    };
    Ok(match pattern {
        TrafficPattern::UniformRandom | TrafficPattern::Bursty { class: AddrClass::Uniform, .. } => {
            pick(rng, total_words) * u64::from(WORD_BYTES)
        }
        TrafficPattern::LocalTile | TrafficPattern::Bursty { class: AddrClass::LocalTile, .. } => {
            loc_addr(
                own_group as u16,
                own_tile as u16,
                pick(rng, u64::from(cfg.banks_per_tile)) as u16,
                pick(rng, u64::from(cfg.words_per_bank())) as u32,
            )
        }
        TrafficPattern::LocalGroup | TrafficPattern::Bursty { class: AddrClass::LocalGroup, .. } => {
            // A random tile other than our own.
            let t = pick(rng, u64::from(cfg.tiles_per_group) - 1) as u16;
            let tile = if u32::from(t) >= own_tile { t + 1 } else { t };
            loc_addr(
                own_group as u16,
                tile,
                pick(rng, u64::from(cfg.banks_per_tile)) as u16,
                pick(rng, u64::from(cfg.words_per_bank())) as u32,
            )
        }
        TrafficPattern::Hotspot { target_groups, skew, bank_stride } => {
            let group = if rng.next_f64() < *skew {
                target_groups[pick(rng, target_groups.len() as u64) as usize]
            } else {
                // Uniform over non-target groups (fall back to all groups
                // if the target set covers everything).
                let others: u64 = u64::from(cfg.groups) - target_groups.len() as u64;
                if others == 0 {
                    pick(rng, u64::from(cfg.groups)) as u16
                } else {
                    let mut k = pick(rng, others) as u16;
                    let mut g = 0u16;
                    loop {
                        if !target_groups.contains(&g) {
                            if k == 0 {
                                break;
                            }
                            k -= 1;
                        }
                        g += 1;
                    }
                    g
                }
            };
            let strides = u64::from(cfg.banks_per_tile / *bank_stride).max(1);
            let bank = (pick(rng, strides) as u16) * *bank_stride;
            loc_addr(
                group,
                pick(rng, u64::from(cfg.tiles_per_group)) as u16,
                bank.min(cfg.banks_per_tile - 1),
                pick(rng, u64::from(cfg.words_per_bank())) as u32,
            )
        }
        TrafficPattern::Strided { stride_words, pe_offset_words } => {
            let w = (u64::from(pe) * pe_offset_words + step * stride_words) % total_words;
            w * u64::from(WORD_BYTES)
        }
        TrafficPattern::Trace => unreachable!("trace plans come from load_trace"),
    })
}

// ---------------------------------------------------------------------------
// Trace files
// ---------------------------------------------------------------------------

const TRACE_HEADER: &str = "ready_cycle,pe_id,op,addr,size_bytes";

/// Parses a request trace. Format: a `ready_cycle,pe_id,op,addr,size_bytes`
/// header, one CSV record per request (`op` in {R, W, A}, `addr` hex),
/// `#`-comments and blank lines ignored.
pub fn parse_trace(text: &str, cfg: &TopologyConfig) -> Result<Vec<Vec<PlannedRequest>>> {
    let map = cfg.address_map();
    let mut plans: Vec<Vec<PlannedRequest>> = vec![Vec::new(); cfg.total_pes() as usize];
    let mut saw_header = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = idx + 1;
        let fail = |reason: String| SimError::TraceParse { line: lineno, reason };
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_header {
            if line != TRACE_HEADER {
                return Err(fail(format!("expected header '{TRACE_HEADER}'")));
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(fail(format!("expected 5 fields, got {}", fields.len())));
        }
        let ready: Cycle = fields[0]
            .parse()
            .map_err(|_| fail(format!("bad ready_cycle '{}'", fields[0])))?;
        let pe: u32 = fields[1]
            .parse()
            .map_err(|_| fail(format!("bad pe_id '{}'", fields[1])))?;
        if pe >= cfg.total_pes() {
            return Err(fail(format!("pe_id {pe} outside 0..{}", cfg.total_pes())));
        }
        let mut chars = fields[2].chars();
        let op = match (chars.next().and_then(AccessKind::from_letter), chars.next()) {
            (Some(op), None) => op,
            _ => return Err(fail(format!("bad op '{}' (expected R, W or A)", fields[2]))),
        };
        let addr_text = fields[3]
            .strip_prefix("0x")
            .or_else(|| fields[3].strip_prefix("0X"))
            .unwrap_or(fields[3]);
        let addr = u64::from_str_radix(addr_text, 16)
            .map_err(|_| fail(format!("bad hex address '{}'", fields[3])))?;
        let size: u32 = fields[4]
            .parse()
            .map_err(|_| fail(format!("bad size_bytes '{}'", fields[4])))?;
        if size == 0 || !size.is_multiple_of(WORD_BYTES) {
            return Err(fail(format!("size {size} must be a positive word multiple")));
        }
        map.map(addr).map_err(|e| fail(e.to_string()))?;
        plans[pe as usize].push(PlannedRequest {
            ready,
            addr,
            kind: op,
            size,
            dependent: false,
            barrier_index: 0,
        });
    }
    if !saw_header {
        return Err(SimError::TraceParse {
            line: 0,
            reason: "empty trace (missing header)".into(),
        });
    }
    for plan in &mut plans {
        plan.sort_by_key(|r| r.ready);
    }
    Ok(plans)
}

/// Serializes plans back to the trace format (inverse of [`parse_trace`]).
pub fn format_trace(plans: &[Vec<PlannedRequest>]) -> String {
    let mut out = String::new();
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for (pe, plan) in plans.iter().enumerate() {
        for r in plan {
            let _ = writeln!(
                out,
                "{},{},{},0x{:x},{}",
                r.ready,
                pe,
                r.kind.letter(),
                r.addr,
                r.size
            );
        }
    }
    out
}

// ---------------------------------------------------------------------------
// PE runtime
// ---------------------------------------------------------------------------

/// Per-PE issue and stall counters. The five cycle categories partition
/// `[0, total_cycles)` exactly.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PeCounters {
    pub reads: u64,
    pub writes: u64,
    pub atomics: u64,
    pub responses: u64,
    pub active_cycles: u64,
    pub lsu_full_cycles: u64,
    pub load_use_cycles: u64,
    pub barrier_cycles: u64,
    pub idle_cycles: u64,
}

impl PeCounters {
    pub fn issued(&self) -> u64 {
        self.reads + self.writes + self.atomics
    }

    pub fn category_sum(&self) -> u64 {
        self.active_cycles
            + self.lsu_full_cycles
            + self.load_use_cycles
            + self.barrier_cycles
            + self.idle_cycles
    }
}

/// What a PE is currently waiting for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Block {
    /// Waiting for a ready cycle, or out of work.
    Idle,
    /// Predecessor response not yet arrived for a dependent request.
    Dep,
    /// Outstanding window full.
    Window,
    /// Tile crossbar entry queue full.
    Credit,
    Barrier,
}

impl Block {
    fn bucket(self, c: &mut PeCounters, dt: u64) {
        match self {
            Block::Idle => c.idle_cycles += dt,
            Block::Dep => c.load_use_cycles += dt,
            Block::Window | Block::Credit => c.lsu_full_cycles += dt,
            Block::Barrier => c.barrier_cycles += dt,
        }
    }
}

/// Outcome of one issue attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Attempt {
    /// Nothing issued; if `Some(at)`, the caller should try again at `at`
    /// (event-driven wakeup for schedule gaps). All other stalls are
    /// resolved by response/credit/barrier notifications.
    Waiting(Option<Cycle>),
    /// Arrived at the barrier; if `release_at` is set this arrival was the
    /// last one and every waiting PE resumes at that cycle.
    AtBarrier { release_at: Option<Cycle> },
    /// The request at `step` must be issued now by the caller.
    Issue { step: usize },
}

/// Issue-side state of one PE.
#[derive(Debug, Clone)]
pub struct PeState {
    pub plan: Vec<PlannedRequest>,
    pub next_step: usize,
    pub in_flight: u16,
    pub max_outstanding: u16,
    /// Id and completion flag of the most recently issued request, for
    /// dependence tracking.
    prev_id: Option<u64>,
    prev_done: bool,
    passed_barriers: u32,
    at_barrier: bool,
    last_issue: Option<Cycle>,
    block: Block,
    block_since: Cycle,
    pub counters: PeCounters,
}

impl PeState {
    pub fn new(plan: Vec<PlannedRequest>, max_outstanding: u16) -> Self {
        PeState {
            plan,
            next_step: 0,
            in_flight: 0,
            max_outstanding,
            prev_id: None,
            prev_done: true,
            passed_barriers: 0,
            at_barrier: false,
            last_issue: None,
            block: Block::Idle,
            block_since: 0,
            counters: PeCounters::default(),
        }
    }

    pub fn done(&self) -> bool {
        self.next_step == self.plan.len()
    }

    /// True while the PE waits for a barrier release.
    pub fn at_barrier(&self) -> bool {
        self.at_barrier
    }

    /// Folds the open wait interval `[block_since, now)` into its bucket.
    fn fold(&mut self, now: Cycle) {
        let dt = now.saturating_sub(self.block_since);
        self.block.bucket(&mut self.counters, dt);
        self.block_since = now;
    }

    /// Switches the current wait bucket, folding the elapsed interval.
    fn shift(&mut self, now: Cycle, to: Block) {
        if self.block == to {
            return;
        }
        self.fold(now);
        self.block = to;
    }

    /// One issue attempt at cycle `now`.
    ///
    /// `credit_free` reports whether the PE's crossbar entry queue has
    /// space. On `Attempt::Issue` all internal bookkeeping is already done;
    /// the caller must actually enqueue the request (consuming the credit)
    /// and give it an id via [`PeState::assign_id`].
    pub fn attempt(
        &mut self,
        now: Cycle,
        credit_free: bool,
        barrier: &mut BarrierState,
    ) -> Attempt {
        if self.last_issue == Some(now) || self.at_barrier {
            return Attempt::Waiting(None);
        }
        if self.done() {
            self.shift(now, Block::Idle);
            return Attempt::Waiting(None);
        }
        let next = self.plan[self.next_step];
        if next.barrier_index > self.passed_barriers {
            // Fence semantics: drain our own traffic, then wait for the rest.
            if self.in_flight > 0 {
                self.shift(now, Block::Barrier);
                return Attempt::Waiting(None);
            }
            self.shift(now, Block::Barrier);
            self.at_barrier = true;
            let release_at = barrier.arrive(now);
            return Attempt::AtBarrier { release_at };
        }
        if next.ready > now {
            self.shift(now, Block::Idle);
            return Attempt::Waiting(Some(next.ready));
        }
        if next.dependent && !self.prev_done {
            self.shift(now, Block::Dep);
            return Attempt::Waiting(None);
        }
        if self.in_flight >= self.max_outstanding {
            self.shift(now, Block::Window);
            return Attempt::Waiting(None);
        }
        if !credit_free {
            self.shift(now, Block::Credit);
            return Attempt::Waiting(None);
        }
        // Issue: close the current wait interval, count this cycle as
        // active, and start the next interval after it.
        self.fold(now);
        self.block = Block::Idle;
        self.block_since = now + 1;
        self.counters.active_cycles += 1;
        match next.kind {
            AccessKind::Read => self.counters.reads += 1,
            AccessKind::Write => self.counters.writes += 1,
            AccessKind::Atomic => self.counters.atomics += 1,
        }
        self.in_flight += 1;
        self.last_issue = Some(now);
        let step = self.next_step;
        self.next_step += 1;
        Attempt::Issue { step }
    }

    /// Records the id the system gave to the just-issued request.
    pub fn assign_id(&mut self, id: u64) {
        self.prev_id = Some(id);
        self.prev_done = false;
    }

    /// A response arrived for this PE.
    pub fn on_response(&mut self, id: u64) {
        debug_assert!(self.in_flight > 0);
        self.in_flight -= 1;
        self.counters.responses += 1;
        if self.prev_id == Some(id) {
            self.prev_done = true;
        }
    }

    /// Barrier released: resume from cycle `now`.
    pub fn on_barrier_release(&mut self, now: Cycle) {
        debug_assert!(self.at_barrier);
        self.at_barrier = false;
        self.passed_barriers += 1;
        self.shift(now, Block::Idle);
    }

    /// Closes the open wait interval at the end of the run.
    pub fn finalize(&mut self, end: Cycle) {
        self.fold(end);
    }
}

/// Cluster-wide barrier coordinator: releases one cycle after the last
/// participant arrives.
#[derive(Debug, Clone)]
pub struct BarrierState {
    participants: u32,
    arrived: u32,
    pub release_at: Option<Cycle>,
}

impl BarrierState {
    pub fn new(participants: u32) -> Self {
        BarrierState {
            participants,
            arrived: 0,
            release_at: None,
        }
    }

    /// Registers an arrival; returns the release cycle once the barrier is
    /// full.
    pub fn arrive(&mut self, now: Cycle) -> Option<Cycle> {
        debug_assert!(self.release_at.is_none());
        self.arrived += 1;
        if self.arrived == self.participants {
            self.release_at = Some(now + 1);
            self.release_at
        } else {
            None
        }
    }

    /// Resets for the next barrier generation.
    pub fn reset(&mut self) {
        self.arrived = 0;
        self.release_at = None;
    }
}

// ---------------------------------------------------------------------------
// Bank runtime
// ---------------------------------------------------------------------------

/// Access and contention counters of one SPM bank.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BankStats {
    pub accesses: u64,
    /// Cycles requests waited in the bank queue before service started.
    pub conflict_wait_cycles: u64,
    /// Cycles a finished response waited for mesh response-queue space.
    pub response_blocked_cycles: u64,
}

/// Cycles `req` occupies its bank: the base service time per word, plus one
/// extra cycle for the read-modify-write of an atomic.
pub fn bank_service_cycles(base: u32, req: &Request) -> u64 {
    let words = u64::from(req.size.max(WORD_BYTES) / WORD_BYTES);
    let atomic_extra = u64::from(req.kind == AccessKind::Atomic);
    u64::from(base) * words + atomic_extra
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::request::BankLoc;

    fn small_cfg() -> TopologyConfig {
        TopologyConfig {
            groups: 4,
            tiles_per_group: 4,
            pes_per_tile: 2,
            banks_per_tile: 8,
            bank_bytes: 256,
            ..TopologyConfig::default()
        }
    }

    #[test]
    fn generation_is_reproducible() {
        let cfg = small_cfg();
        let spec = WorkloadSpec {
            write_fraction: 0.3,
            atomic_fraction: 0.1,
            dependence_fraction: 0.25,
            requests_per_pe: 50,
            ..WorkloadSpec::default()
        };
        let a = generate_plans(&spec, &cfg, 7).unwrap();
        let b = generate_plans(&spec, &cfg, 7).unwrap();
        let c = generate_plans(&spec, &cfg, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), cfg.total_pes() as usize);
        assert!(a.iter().all(|p| p.len() == 50));
    }

    #[test]
    fn local_patterns_stay_local() {
        let cfg = small_cfg();
        let map = cfg.address_map();
        let tile_spec = WorkloadSpec {
            pattern: TrafficPattern::LocalTile,
            requests_per_pe: 40,
            ..WorkloadSpec::default()
        };
        for (pe, plan) in generate_plans(&tile_spec, &cfg, 1).unwrap().iter().enumerate() {
            let own_tile = (pe as u32 / 2) % 4;
            let own_group = pe as u32 / 8;
            for r in plan {
                let loc = map.map(r.addr).unwrap();
                assert_eq!(u32::from(loc.group), own_group);
                assert_eq!(u32::from(loc.tile), own_tile);
            }
        }
        let group_spec = WorkloadSpec {
            pattern: TrafficPattern::LocalGroup,
            requests_per_pe: 40,
            ..WorkloadSpec::default()
        };
        for (pe, plan) in generate_plans(&group_spec, &cfg, 1).unwrap().iter().enumerate() {
            let own_tile = (pe as u32 / 2) % 4;
            let own_group = pe as u32 / 8;
            for r in plan {
                let loc = map.map(r.addr).unwrap();
                assert_eq!(u32::from(loc.group), own_group);
                assert_ne!(u32::from(loc.tile), own_tile, "local-group must leave the tile");
            }
        }
    }

    #[test]
    fn hotspot_fraction_tracks_skew() {
        let cfg = small_cfg();
        let spec = WorkloadSpec {
            pattern: TrafficPattern::Hotspot {
                target_groups: vec![1, 2],
                skew: 0.8,
                bank_stride: 1,
            },
            requests_per_pe: 10_000 / 32 + 1,
            ..WorkloadSpec::default()
        };
        let map = cfg.address_map();
        let plans = generate_plans(&spec, &cfg, 3).unwrap();
        let mut hot = 0u64;
        let mut total = 0u64;
        for plan in &plans {
            for r in plan {
                let loc = map.map(r.addr).unwrap();
                hot += u64::from(loc.group == 1 || loc.group == 2);
                total += 1;
            }
        }
        let frac = hot as f64 / total as f64;
        assert!(total >= 10_000);
        assert!((frac - 0.8).abs() < 0.02, "hotspot fraction was {frac}");
    }

    #[test]
    fn even_bank_stride_pins_the_port_parity() {
        let cfg = small_cfg();
        let spec = WorkloadSpec {
            pattern: TrafficPattern::Hotspot {
                target_groups: vec![0],
                skew: 1.0,
                bank_stride: 2,
            },
            requests_per_pe: 64,
            ..WorkloadSpec::default()
        };
        let map = cfg.address_map();
        for plan in generate_plans(&spec, &cfg, 5).unwrap() {
            for r in plan {
                let loc = map.map(r.addr).unwrap();
                assert_eq!(loc.bank % 2, 0, "stride-2 banks must all be even");
                assert_eq!(cfg.mesh_port_for_bank(loc.bank), 0);
            }
        }
    }

    #[test]
    fn bursty_schedule_shapes_ready_cycles() {
        let cfg = small_cfg();
        let spec = WorkloadSpec {
            pattern: TrafficPattern::Bursty { burst_len: 4, period: 16, class: AddrClass::Uniform },
            requests_per_pe: 10,
            stagger_stride: 3,
            ..WorkloadSpec::default()
        };
        let plans = generate_plans(&spec, &cfg, 0).unwrap();
        let readies: Vec<Cycle> = plans[0].iter().map(|r| r.ready).collect();
        assert_eq!(readies, vec![0, 1, 2, 3, 16, 17, 18, 19, 32, 33]);
        let staggered: Vec<Cycle> = plans[2].iter().map(|r| r.ready).collect();
        assert_eq!(staggered[0], 6, "pe 2 starts at 2 * stagger_stride");
    }

    #[test]
    fn trace_round_trips_and_rejects_garbage() {
        let cfg = small_cfg();
        let text = "\
# demo trace
ready_cycle,pe_id,op,addr,size_bytes
0,0,R,0x40,4
2,1,W,0x80,8
5,0,A,0x0,4
";
        let plans = parse_trace(text, &cfg).unwrap();
        assert_eq!(plans[0].len(), 2);
        assert_eq!(plans[1].len(), 1);
        assert_eq!(plans[0][1].kind, AccessKind::Atomic);
        assert_eq!(plans[1][0].size, 8);
        let rendered = format_trace(&plans);
        let again = parse_trace(&rendered, &cfg).unwrap();
        assert_eq!(plans, again);

        for bad in [
            "ready_cycle,pe_id,op,addr,size_bytes\n0,0,X,0x0,4",
            "ready_cycle,pe_id,op,addr,size_bytes\n0,999,R,0x0,4",
            "ready_cycle,pe_id,op,addr,size_bytes\n0,0,R,zzz,4",
            "ready_cycle,pe_id,op,addr,size_bytes\n0,0,R,0x0,3",
            "0,0,R,0x0,4",
        ] {
            assert!(
                matches!(parse_trace(bad, &cfg), Err(SimError::TraceParse { .. })),
                "accepted: {bad}"
            );
        }
    }

    #[test]
    fn unreachable_addresses_fail_fast() {
        let cfg = small_cfg();
        let text = format!(
            "ready_cycle,pe_id,op,addr,size_bytes\n0,0,R,0x{:x},4",
            cfg.total_bytes()
        );
        assert!(parse_trace(&text, &cfg).is_err());
    }

    fn planned(ready: Cycle, dependent: bool) -> PlannedRequest {
        PlannedRequest {
            ready,
            addr: 0,
            kind: AccessKind::Read,
            size: 4,
            dependent,
            barrier_index: 0,
        }
    }

    #[test]
    fn pe_categories_partition_time() {
        // Plan: issue at 0; dependent request ready at 1 whose predecessor
        // response arrives at 5; one more at ready 9 after an idle gap.
        let mut barrier = BarrierState::new(1);
        let mut pe = PeState::new(
            vec![planned(0, false), planned(1, true), planned(9, false)],
            8,
        );
        assert_eq!(pe.attempt(0, true, &mut barrier), Attempt::Issue { step: 0 });
        pe.assign_id(100);
        // Cycle 1..5: dependence blocked.
        for now in 1..=4 {
            assert_eq!(pe.attempt(now, true, &mut barrier), Attempt::Waiting(None));
        }
        pe.on_response(100);
        assert_eq!(pe.attempt(5, true, &mut barrier), Attempt::Issue { step: 1 });
        pe.assign_id(101);
        // Ready gap: next attempt reports the wake-up cycle.
        assert_eq!(pe.attempt(6, true, &mut barrier), Attempt::Waiting(Some(9)));
        assert_eq!(pe.attempt(9, true, &mut barrier), Attempt::Issue { step: 2 });
        pe.assign_id(102);
        pe.on_response(101);
        pe.on_response(102);
        pe.finalize(12);
        let c = pe.counters;
        assert_eq!(c.active_cycles, 3);
        assert_eq!(c.load_use_cycles, 4); // cycles 1-4
        assert_eq!(c.idle_cycles, 12 - 3 - 4);
        assert_eq!(c.category_sum(), 12);
        assert_eq!(c.responses, 3);
    }

    #[test]
    fn window_and_credit_stalls_count_as_lsu_full() {
        let mut barrier = BarrierState::new(1);
        let mut pe = PeState::new((0..4).map(|_| planned(0, false)).collect(), 1);
        assert!(matches!(pe.attempt(0, true, &mut barrier), Attempt::Issue { .. }));
        pe.assign_id(0);
        // Window full for cycles 1-2.
        assert_eq!(pe.attempt(1, true, &mut barrier), Attempt::Waiting(None));
        assert_eq!(pe.attempt(2, true, &mut barrier), Attempt::Waiting(None));
        pe.on_response(0);
        // Credit blocked at cycle 3.
        assert_eq!(pe.attempt(3, false, &mut barrier), Attempt::Waiting(None));
        assert!(matches!(pe.attempt(4, true, &mut barrier), Attempt::Issue { .. }));
        pe.assign_id(1);
        pe.finalize(5);
        assert_eq!(pe.counters.lsu_full_cycles, 3); // 1, 2 (window) + 3 (credit)
        assert_eq!(pe.counters.active_cycles, 2);
        assert_eq!(pe.counters.category_sum(), 5);
    }

    #[test]
    fn barrier_releases_one_cycle_after_last_arrival() {
        let mut barrier = BarrierState::new(2);
        let mk = |_: u32| {
            let mut plan = vec![planned(0, false), planned(0, false)];
            plan[1].barrier_index = 1;
            PeState::new(plan, 8)
        };
        let mut a = mk(0);
        let mut b = mk(1);
        assert!(matches!(a.attempt(0, true, &mut barrier), Attempt::Issue { .. }));
        a.assign_id(0);
        assert!(matches!(b.attempt(0, true, &mut barrier), Attempt::Issue { .. }));
        b.assign_id(1);
        // a's response returns at 2; it reaches the barrier then.
        a.on_response(0);
        assert_eq!(a.attempt(2, true, &mut barrier), Attempt::AtBarrier { release_at: None });
        // b drains at 6 and completes the barrier: release at 7.
        b.on_response(1);
        assert_eq!(
            b.attempt(6, true, &mut barrier),
            Attempt::AtBarrier { release_at: Some(7) }
        );
        a.on_barrier_release(7);
        b.on_barrier_release(7);
        barrier.reset();
        assert!(matches!(a.attempt(7, true, &mut barrier), Attempt::Issue { .. }));
        a.assign_id(2);
        a.on_response(2);
        a.finalize(8);
        // Cycles: active 0 and 7; barrier 2-6 (arrival to release); idle 1.
        assert_eq!(a.counters.active_cycles, 2);
        assert_eq!(a.counters.barrier_cycles, 5);
        assert_eq!(a.counters.idle_cycles, 1);
        assert_eq!(a.counters.category_sum(), 8);
    }

    #[test]
    fn bank_service_time_scales_with_words_and_atomics() {
        let mut r = Request {
            id: 0,
            initiator: 0,
            addr: 0,
            kind: AccessKind::Read,
            size: 4,
            dest: BankLoc { group: 0, tile: 0, bank: 0, offset: 0 },
            issued_at: 0,
            latency: 0,
            duration: 0,
            is_response: false,
            channel: None,
        };
        assert_eq!(bank_service_cycles(1, &r), 1);
        r.kind = AccessKind::Atomic;
        assert_eq!(bank_service_cycles(1, &r), 2);
        r.kind = AccessKind::Write;
        r.size = 16;
        assert_eq!(bank_service_cycles(1, &r), 4);
        assert_eq!(bank_service_cycles(2, &r), 8);
    }
}
