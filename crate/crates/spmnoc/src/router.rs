//! Generic router primitive.
//!
//! Every arbitration point in the interconnect — tile crossbars, the
//! intra-group crossbar, mesh routers — is an instance of [`Router`]: a set
//! of input FIFO queues feeding a set of output ports. Instances differ only
//! in their [`RouterSpec`] (port counts, bandwidth, base latency, routing
//! policy, dispatch mode, queue depth).
//!
//! Per-output semantics at cycle `t`:
//!
//! 1. candidates are the queue heads routed to this output that were already
//!    at their queue head when the cycle started,
//! 2. if the output is still serializing a previous transfer
//!    (`busy_until > t`) nothing is granted,
//! 3. otherwise a round-robin pick starting after the last granted input
//!    wins; the grant occupies the output for the transfer duration and the
//!    payload reaches the downstream component after the output's base
//!    latency.
//!
//! Downstream space (credit) checks sit between [`Router::decide`] and
//! [`Router::commit_grant`] because only the surrounding system knows the
//! wiring; a failed check is recorded through [`Router::note_blocked`].
//!
//! The decision at cycle `t` depends only on state as of the start of the
//! cycle, which is what lets an event-driven schedule and a brute-force
//! per-cycle schedule of the same model agree exactly.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::request::{transfer_duration, Request};
use crate::Cycle;

/// How a router picks the output port for a request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoutingPolicy {
    /// Decode the word-interleaved address to a local port (crossbars).
    InterleavedAddress,
    /// Dimension-order (X then Y) routing toward a destination group.
    XyMesh,
    /// Single fixed output regardless of address.
    FixedPort,
}

/// When the round-robin pointer advances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RrUpdate {
    /// Pointer moves to the granted input on every grant (default).
    #[default]
    PerGrant,
    /// Priority rotates with the cycle counter regardless of grants.
    PerCycle,
}

/// How a router hands a granted request to the next component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DispatchMode {
    /// The downstream path is walked inside the current event; congestion
    /// is modeled only through busy-until bookkeeping. Used for response
    /// paths inside a group.
    Synchronous,
    /// The request is queued at the next component and a timestamped event
    /// carries it forward. Used for all request paths and the mesh.
    Asynchronous,
}

/// Architectural description of one router instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouterSpec {
    pub inputs: u16,
    pub outputs: u16,
    /// Port width: bytes accepted per output per cycle.
    pub bytes_per_cycle: u32,
    /// Zero-load traversal latency in cycles, per output.
    pub base_latency: u32,
    pub routing: RoutingPolicy,
    pub dispatch: DispatchMode,
    /// Input queue depth for asynchronous routers.
    pub queue_capacity: u8,
    pub rr_update: RrUpdate,
}

impl RouterSpec {
    pub fn new(inputs: u16, outputs: u16, routing: RoutingPolicy, dispatch: DispatchMode) -> Self {
        RouterSpec {
            inputs,
            outputs,
            bytes_per_cycle: 4,
            base_latency: 1,
            routing,
            dispatch,
            queue_capacity: 2,
            rr_update: RrUpdate::PerGrant,
        }
    }
}

/// One queued transaction with its precomputed output port.
#[derive(Debug, Clone)]
pub struct QueueEntry {
    pub req: Request,
    pub arrived: Cycle,
    pub out: u16,
}

/// Occupancy statistics of one input queue.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QueueStats {
    pub enqueues: u64,
    pub max_occupancy: u8,
    /// Integral of occupancy over time; divide by elapsed cycles for the
    /// event-weighted mean.
    pub occupancy_weight: u64,
    last_change: Cycle,
}

/// An input FIFO with credit-based space accounting.
///
/// `free_slots` counts slots not yet promised to an in-flight transfer: the
/// producer decrements it at grant time (before the payload arrives) and a
/// departure returns the slot one cycle later. The queue therefore never
/// overflows and a cycle-t space check never depends on same-cycle events.
#[derive(Debug, Clone)]
pub struct InQueue {
    entries: VecDeque<QueueEntry>,
    pub capacity: u8,
    pub free_slots: u8,
    pub last_pop: Option<Cycle>,
    pub stats: QueueStats,
}

impl InQueue {
    pub fn new(capacity: u8) -> Self {
        InQueue {
            entries: VecDeque::new(),
            capacity,
            free_slots: capacity,
            last_pop: None,
            stats: QueueStats::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn head(&self) -> Option<&QueueEntry> {
        self.entries.front()
    }

    /// True if the head entry may be granted at cycle `now` (it was the head
    /// when the cycle started: at most one pop per queue per cycle).
    pub fn head_eligible(&self, now: Cycle) -> bool {
        match self.entries.front() {
            Some(e) => {
                debug_assert!(e.arrived <= now);
                self.last_pop != Some(now)
            }
            None => false,
        }
    }

    pub fn push(&mut self, req: Request, arrived: Cycle, out: u16) {
        let occ = self.entries.len() as u8;
        debug_assert!(occ < self.capacity, "queue overflow: credits violated");
        self.account(arrived, occ);
        self.stats.enqueues += 1;
        self.stats.max_occupancy = self.stats.max_occupancy.max(occ + 1);
        self.entries.push_back(QueueEntry { req, arrived, out });
    }

    pub fn pop(&mut self, now: Cycle) -> QueueEntry {
        let occ = self.entries.len() as u8;
        self.account(now, occ);
        self.last_pop = Some(now);
        self.entries.pop_front().expect("pop from empty queue")
    }

    /// Folds the occupancy-time integral up to `now`.
    fn account(&mut self, now: Cycle, occ: u8) {
        self.stats.occupancy_weight += u64::from(occ) * (now - self.stats.last_change);
        self.stats.last_change = now;
    }

    /// Closes the occupancy integral at the end of a run.
    pub fn finalize(&mut self, end: Cycle) {
        let occ = self.entries.len() as u8;
        self.account(end, occ);
    }
}

/// Utilization and contention statistics of one output port.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PortStats {
    /// Cycles spent serializing transfers (sum of grant durations).
    pub busy_cycles: u64,
    pub transfers: u64,
    /// Grants issued while at least one other input wanted this output.
    pub conflicts: u64,
    /// Cycles a grantable request sat waiting only for downstream space.
    pub blocked_cycles: u64,
}

/// One output port of a router.
#[derive(Debug, Clone)]
pub struct OutPort {
    pub base_latency: u32,
    pub bytes_per_cycle: u32,
    pub busy_until: Cycle,
    pub rr_ptr: u16,
    pub rr_update: RrUpdate,
    pub blocked_since: Option<Cycle>,
    /// Engine-side marker coalescing duplicate evaluation events; carries no
    /// model semantics.
    pub eval_marker: Option<Cycle>,
    pub stats: PortStats,
}

impl OutPort {
    fn new(spec: &RouterSpec) -> Self {
        OutPort {
            base_latency: spec.base_latency,
            bytes_per_cycle: spec.bytes_per_cycle,
            busy_until: 0,
            rr_ptr: spec.inputs.saturating_sub(1),
            rr_update: spec.rr_update,
            blocked_since: None,
            eval_marker: None,
            stats: PortStats::default(),
        }
    }
}

/// Result of evaluating one output at one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    /// No eligible candidate routed to this output.
    Idle,
    /// Serializing a previous transfer until the contained cycle.
    Busy(Cycle),
    /// `input`'s head wins; `candidates` is the contending input count.
    Grant { input: u16, candidates: u16 },
}

/// A granted transfer, ready to be moved downstream by the caller.
#[derive(Debug)]
pub struct Granted {
    pub entry: QueueEntry,
    /// Serialization time on the granting output.
    pub duration: u64,
    /// Cycle the payload reaches the downstream component.
    pub arrival: Cycle,
    /// The granting output is busy until this cycle.
    pub busy_until: Cycle,
    /// True if the source queue still holds entries (their new head becomes
    /// eligible next cycle).
    pub more_queued: bool,
}

/// A configurable crossbar/router: input queues, arbitrated output ports.
#[derive(Debug, Clone)]
pub struct Router {
    pub spec: RouterSpec,
    pub queues: Vec<InQueue>,
    pub outputs: Vec<OutPort>,
}

impl Router {
    pub fn new(spec: RouterSpec) -> Self {
        let queues = (0..spec.inputs)
            .map(|_| InQueue::new(spec.queue_capacity))
            .collect();
        let outputs = (0..spec.outputs).map(|_| OutPort::new(&spec)).collect();
        Router {
            spec,
            queues,
            outputs,
        }
    }

    /// Overrides the base latency of one output (e.g. mesh link vs. eject).
    pub fn set_output_latency(&mut self, output: u16, cycles: u32) {
        self.outputs[output as usize].base_latency = cycles;
    }

    /// Evaluates output `output` at cycle `now` without committing anything.
    pub fn decide(&self, output: u16, now: Cycle) -> Decision {
        let port = &self.outputs[output as usize];
        let n = self.queues.len() as u16;
        let mut candidates = 0u16;
        let mut winner = None;
        let start = match port.rr_update {
            RrUpdate::PerGrant => port.rr_ptr,
            RrUpdate::PerCycle => (now % u64::from(n.max(1))) as u16,
        };
        for off in 1..=n {
            let i = (start + off) % n;
            let q = &self.queues[i as usize];
            if q.head_eligible(now) && q.head().unwrap().out == output {
                candidates += 1;
                if winner.is_none() {
                    winner = Some(i);
                }
            }
        }
        match winner {
            None => Decision::Idle,
            Some(_) if port.busy_until > now => Decision::Busy(port.busy_until),
            Some(input) => Decision::Grant { input, candidates },
        }
    }

    /// Records that a grantable request could not move for lack of
    /// downstream space at cycle `now`.
    pub fn note_blocked(&mut self, output: u16, now: Cycle) {
        let port = &mut self.outputs[output as usize];
        if port.blocked_since.is_none() {
            port.blocked_since = Some(now);
        }
    }

    /// Commits the grant of `input`'s head on `output` at cycle `now`.
    ///
    /// Updates round-robin state, serialization, statistics and the
    /// request's accumulated latency/duration. The caller moves the entry
    /// downstream (arrival at `Granted::arrival`) and owes the source queue
    /// a credit return one cycle after `now`.
    pub fn commit_grant(
        &mut self,
        output: u16,
        input: u16,
        candidates: u16,
        now: Cycle,
    ) -> Granted {
        let port = &mut self.outputs[output as usize];
        debug_assert!(port.busy_until <= now);
        if let Some(since) = port.blocked_since.take() {
            port.stats.blocked_cycles += now - since;
        }
        if port.rr_update == RrUpdate::PerGrant {
            port.rr_ptr = input;
        }
        let q = &mut self.queues[input as usize];
        let mut entry = q.pop(now);
        let more_queued = !q.is_empty();
        let duration = transfer_duration(entry.req.payload_bytes(), port.bytes_per_cycle);
        let wait = now - entry.arrived;
        entry.req.latency += wait + u64::from(port.base_latency);
        entry.req.duration = entry.req.duration.max(duration);
        port.busy_until = now + duration;
        port.stats.busy_cycles += duration;
        port.stats.transfers += 1;
        if candidates >= 2 {
            port.stats.conflicts += 1;
        }
        Granted {
            arrival: now + u64::from(port.base_latency),
            busy_until: port.busy_until,
            duration,
            entry,
            more_queued,
        }
    }

    /// Closes open accounting intervals at the end of a run.
    pub fn finalize(&mut self, end: Cycle) {
        for q in &mut self.queues {
            q.finalize(end);
        }
        for p in &mut self.outputs {
            if let Some(since) = p.blocked_since.take() {
                p.stats.blocked_cycles += end - since;
            }
        }
    }
}

/// One synchronously-walked pipeline stage (response paths inside a group).
///
/// A stage is the degenerate router of the synchronous dispatch mode: no
/// queues, first-come-first-served serialization through `busy_until`.
#[derive(Debug, Clone)]
pub struct SyncStage {
    pub base_latency: u32,
    pub bytes_per_cycle: u32,
    pub busy_until: Cycle,
    pub stats: PortStats,
}

impl SyncStage {
    pub fn new(base_latency: u32, bytes_per_cycle: u32) -> Self {
        SyncStage {
            base_latency,
            bytes_per_cycle,
            busy_until: 0,
            stats: PortStats::default(),
        }
    }

    /// Passes `req` through the stage at time `at`; returns when it reaches
    /// the next stage. Contention shows up as busy-until waiting.
    pub fn pass(&mut self, at: Cycle, req: &mut Request) -> Cycle {
        let start = at.max(self.busy_until);
        let duration = transfer_duration(req.payload_bytes(), self.bytes_per_cycle);
        self.busy_until = start + duration;
        self.stats.busy_cycles += duration;
        self.stats.transfers += 1;
        if start > at {
            self.stats.conflicts += 1;
        }
        req.latency += (start - at) + u64::from(self.base_latency);
        req.duration = req.duration.max(duration);
        start + u64::from(self.base_latency)
    }
}
