//! The assembled cluster: every router, bank, PE and wire, plus the
//! event-driven execution machinery.
//!
//! # Component layout
//!
//! Components carry dense ids, PEs first (they act first inside a cycle),
//! then routers, then banks:
//!
//! * tile request crossbar (per tile): inputs = one entry queue per PE, one
//!   from the group crossbar, one per mesh channel (ejected requests);
//!   outputs = one per bank, the group uplink(s), the inter-group ports,
//! * group request crossbar (per group): tiles in, tiles out,
//! * mesh request/response routers (per group x channel): inject plus four
//!   direction inputs; eject plus four direction outputs,
//! * banks: a credit-managed input queue and a one-access service unit.
//!
//! Response paths inside a group are synchronous stages; responses leaving a
//! group ride the response mesh of exactly the channel their request used.
//!
//! # Cycle discipline
//!
//! All model decisions at cycle `t` depend only on state at the start of
//! `t`. Events fall in two classes: *transport* events (queue arrivals,
//! credits, deliveries, completions, wakes) are always scheduled from
//! earlier cycles and therefore pop first; *evaluation* events are zero-delay,
//! scheduled during `t`, and carry all arbitration. Between cycles an
//! end-of-cycle flush executes the response-side work (bank handoffs, mesh
//! ejections, parked retries) ordered by component id. This makes the
//! run equal, decision for decision, to a brute-force per-cycle sweep of the
//! same state — which [`crate::oracle`] exploits for validation.

use std::collections::BTreeMap;

use crate::endpoints::{bank_service_cycles, Attempt, BankStats, BarrierState, PeState, PlannedRequest};
use crate::engine::Engine;
use crate::profiling::{ConflictSeries, HopRecord, LatencyCollector, TraceRecord};
use crate::remap::{Remapper, RemapperConfig, UsageWindows, DEFAULT_USAGE_WINDOW};
use crate::request::Request;
use crate::router::{Decision, DispatchMode, InQueue, Router, RouterSpec, RoutingPolicy, SyncStage};
use crate::topology::{neighbor, next_dir, AddressMap, Dir, TopologyConfig};
use crate::{Cycle, Result, SimError};

/// Sentinel for trace phases that have not happened yet.
pub const PHASE_UNSET: Cycle = Cycle::MAX;

/// Which loop drives the simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Driver {
    /// Event-driven: work happens only where events point.
    Events,
    /// Per-cycle reference sweep: every PE and every router output is
    /// evaluated at every cycle; wake/evaluation events are not used.
    CycleSweep,
}

/// Optional instrumentation switches.
#[derive(Debug, Clone, Copy, Default)]
pub struct Instrumentation {
    /// Collect a full per-request trace (phases and hops).
    pub trace: bool,
    /// Track per-cycle conflict counts at the tiles' inter-group ports.
    pub conflict_series: bool,
}

/// Simulation events.
#[derive(Debug, Clone)]
enum Ev {
    /// `req` lands in input `input` of component `comp` (router or bank).
    Arrive { comp: u32, input: u16, req: Request },
    /// A response leaves the mesh at its destination group; the walk to the
    /// PE is executed at end of cycle in component-id order.
    Eject { router: u32, req: Request },
    /// A response reaches its PE.
    Deliver { pe: u32, req: Request },
    /// A queue slot freed by a pop becomes visible again.
    Credit { comp: u32, input: u16 },
    /// Re-arbitrate one output (head exposed, output freed, remap retry).
    Wake { comp: u32, output: u16 },
    /// Zero-delay: arbitrate one output this cycle.
    Eval { comp: u32, output: u16 },
    /// A PE's scheduled attention cycle.
    PeWake { pe: u32 },
    /// A bank finishes its current access.
    BankDone { bank: u32 },
    /// The cluster barrier releases every waiting PE.
    Release,
}

/// Where a granted transfer goes next.
enum Downstream {
    Queue { comp: u32, input: u16, channel: Option<u16> },
    BankQueue { bank: u32 },
    EjectStage,
}

/// Who refills a queue when a credit returns.
enum Producer {
    Pe(u32),
    Port { comp: u32, output: u16 },
    /// Filled by the end-of-cycle flush (mesh response inject queues);
    /// parked banks retry every flush on their own.
    Flush,
}

/// End-of-cycle work items, executed sorted by initiating component id.
enum FlushAction {
    EjectWalk(Request),
    BankCompletion,
    ParkedRetry,
}

/// One SPM bank: input queue plus a single-access service unit.
#[derive(Debug, Clone)]
struct BankUnit {
    queue: InQueue,
    busy_until: Cycle,
    serving: Option<Request>,
    /// Serviced response awaiting its end-of-cycle handoff.
    completed: Option<Request>,
    /// Response that found the mesh response queue full; blocks service.
    parked: Option<Request>,
    parked_since: Cycle,
    stats: BankStats,
}

impl BankUnit {
    fn new(capacity: u8) -> Self {
        BankUnit {
            queue: InQueue::new(capacity),
            busy_until: 0,
            serving: None,
            completed: None,
            parked: None,
            parked_since: 0,
            stats: BankStats::default(),
        }
    }
}

/// Outcome of an event-driven run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Finished,
    /// The cycle budget ran out with work still in flight.
    BudgetExceeded { outstanding: u64 },
}

/// The wired-up cluster.
pub struct System {
    pub cfg: TopologyConfig,
    map: AddressMap,
    remapper: Remapper,
    driver: Driver,

    pes: Vec<PeState>,
    /// All routers, contiguous: tile request xbars, group request xbars,
    /// mesh request routers, mesh response routers.
    routers: Vec<Router>,
    banks: Vec<BankUnit>,
    /// Final response stage in front of each PE.
    pe_stage: Vec<SyncStage>,
    /// Per-tile uplink into the group response crossbar.
    tile_up_stage: Vec<SyncStage>,
    /// Group response crossbar output toward each destination tile.
    group_stage: Vec<SyncStage>,
    barrier: BarrierState,

    engine: Engine<Ev>,
    flush_actions: Vec<(u32, FlushAction)>,
    parked_banks: Vec<u32>,
    pe_wake_at: Vec<Option<Cycle>>,

    next_id: u64,
    pub issued: u64,
    pub delivered: u64,
    pub last_activity: Option<Cycle>,
    pub usage: UsageWindows,
    pub conflicts_over_time: Option<ConflictSeries>,
    pub traces: Option<BTreeMap<u64, TraceRecord>>,
    pub request_latency: LatencyCollector,
    pub round_trip: LatencyCollector,
    finalized: bool,

    // Cached id-space offsets.
    treq_base: u32,
    greq_base: u32,
    mreq_base: u32,
    mresp_base: u32,
    bank_base: u32,
}

impl System {
    pub fn new(
        cfg: TopologyConfig,
        remap: RemapperConfig,
        plans: Vec<Vec<PlannedRequest>>,
        max_outstanding: u16,
        seed: u64,
        driver: Driver,
        instr: Instrumentation,
    ) -> Result<Self> {
        cfg.validate()?;
        if plans.len() != cfg.total_pes() as usize {
            return Err(SimError::Workload(format!(
                "{} request plans for {} PEs",
                plans.len(),
                cfg.total_pes()
            )));
        }
        let barrier_counts: Vec<u32> = plans
            .iter()
            .map(|p| p.last().map_or(0, |r| r.barrier_index))
            .collect();
        if let Some(&max) = barrier_counts.iter().max() {
            if max > 0 && barrier_counts.iter().any(|&c| c != max) {
                return Err(SimError::Workload(
                    "barriers require every PE to pass the same barrier count".into(),
                ));
            }
        }
        let remapper = Remapper::new(remap, cfg.noc_instances(), cfg.groups, seed)?;

        let g = u32::from(cfg.groups);
        let t = u32::from(cfg.tiles_per_group);
        let p = u32::from(cfg.pes_per_tile);
        let b = u32::from(cfg.banks_per_tile);
        let ch = u32::from(cfg.noc_instances());
        let treq_base = g * t * p;
        let greq_base = treq_base + g * t;
        let mreq_base = greq_base + g;
        let mresp_base = mreq_base + g * ch;
        let bank_base = mresp_base + g * ch;

        let mut routers = Vec::with_capacity((bank_base - treq_base) as usize);
        let inject_extra = if remapper.is_static() { 0 } else { 1 };
        for _ in 0..g * t {
            let mut spec = RouterSpec::new(
                (p + 1 + ch) as u16,
                (u32::from(cfg.banks_per_tile)
                    + u32::from(cfg.intra_group_ports_per_tile)
                    + u32::from(cfg.channels_per_tile)) as u16,
                RoutingPolicy::InterleavedAddress,
                DispatchMode::Asynchronous,
            );
            spec.bytes_per_cycle = cfg.bytes_per_cycle;
            spec.base_latency = cfg.tile_xbar_cycles;
            spec.queue_capacity = cfg.queue_capacity;
            spec.rr_update = cfg.rr_update;
            let mut r = Router::new(spec);
            for c in 0..cfg.channels_per_tile {
                let out = cfg.banks_per_tile + cfg.intra_group_ports_per_tile + c;
                r.set_output_latency(out, cfg.tile_xbar_cycles + inject_extra);
            }
            routers.push(r);
        }
        for _ in 0..g {
            let mut spec = RouterSpec::new(
                cfg.tiles_per_group * cfg.intra_group_ports_per_tile,
                cfg.tiles_per_group,
                RoutingPolicy::InterleavedAddress,
                DispatchMode::Asynchronous,
            );
            spec.bytes_per_cycle = cfg.bytes_per_cycle;
            spec.base_latency = cfg.group_xbar_cycles;
            spec.queue_capacity = cfg.queue_capacity;
            spec.rr_update = cfg.rr_update;
            routers.push(Router::new(spec));
        }
        for mesh_inputs in [5u16, cfg.tiles_per_group + 4] {
            // First the request mesh (inject + 4 dirs), then the response
            // mesh (per-tile inject + 4 dirs).
            for _ in 0..g * ch {
                let mut spec = RouterSpec::new(mesh_inputs, 5, RoutingPolicy::XyMesh, DispatchMode::Asynchronous);
                spec.bytes_per_cycle = cfg.bytes_per_cycle;
                spec.base_latency = cfg.mesh_hop_cycles;
                spec.queue_capacity = cfg.queue_capacity;
                spec.rr_update = cfg.rr_update;
                let mut r = Router::new(spec);
                r.set_output_latency(0, cfg.mesh_eject_cycles());
                routers.push(r);
            }
        }

        let banks = (0..g * t * b)
            .map(|_| BankUnit::new(cfg.queue_capacity))
            .collect();
        let stage = || SyncStage::new(cfg.tile_xbar_cycles, cfg.bytes_per_cycle);
        let group_stage_new = || SyncStage::new(cfg.group_xbar_cycles, cfg.bytes_per_cycle);
        let pe_stage = (0..g * t * p).map(|_| stage()).collect();
        let tile_up_stage = (0..g * t).map(|_| stage()).collect();
        let group_stage = (0..g * t).map(|_| group_stage_new()).collect();

        let total_pes = cfg.total_pes();
        let mut sys = System {
            map: cfg.address_map(),
            remapper,
            driver,
            pes: plans
                .into_iter()
                .map(|plan| PeState::new(plan, max_outstanding))
                .collect(),
            routers,
            banks,
            pe_stage,
            tile_up_stage,
            group_stage,
            barrier: BarrierState::new(total_pes),
            engine: Engine::new(),
            flush_actions: Vec::new(),
            parked_banks: Vec::new(),
            pe_wake_at: vec![None; total_pes as usize],
            next_id: 0,
            issued: 0,
            delivered: 0,
            last_activity: None,
            usage: UsageWindows::new(usize::from(cfg.noc_instances()), DEFAULT_USAGE_WINDOW),
            conflicts_over_time: instr.conflict_series.then(ConflictSeries::default),
            traces: instr.trace.then(BTreeMap::new),
            request_latency: LatencyCollector::default(),
            round_trip: LatencyCollector::default(),
            finalized: false,
            treq_base,
            greq_base,
            mreq_base,
            mresp_base,
            bank_base,
            cfg,
        };
        if sys.driver == Driver::Events {
            for pe in 0..total_pes {
                if let Some(first) = sys.pes[pe as usize].plan.first() {
                    // A plan opening with a barrier must report to it right
                    // away, regardless of the first request's ready cycle.
                    let at = if first.barrier_index > 0 { 0 } else { first.ready };
                    sys.pe_wake_at[pe as usize] = Some(at);
                    sys.engine.schedule_at(at, Ev::PeWake { pe })?;
                }
            }
        }
        Ok(sys)
    }

    // -- id arithmetic ----------------------------------------------------

    fn pe_coords(&self, pe: u32) -> (u16, u16, u16) {
        let p = u32::from(self.cfg.pes_per_tile);
        let t = u32::from(self.cfg.tiles_per_group);
        ((pe / (p * t)) as u16, ((pe / p) % t) as u16, (pe % p) as u16)
    }

    fn treq_id(&self, g: u16, t: u16) -> u32 {
        self.treq_base + u32::from(g) * u32::from(self.cfg.tiles_per_group) + u32::from(t)
    }

    fn greq_id(&self, g: u16) -> u32 {
        self.greq_base + u32::from(g)
    }

    fn mreq_id(&self, g: u16, ch: u16) -> u32 {
        self.mreq_base + u32::from(g) * u32::from(self.cfg.noc_instances()) + u32::from(ch)
    }

    fn mresp_id(&self, g: u16, ch: u16) -> u32 {
        self.mresp_base + u32::from(g) * u32::from(self.cfg.noc_instances()) + u32::from(ch)
    }

    fn bank_id(&self, g: u16, t: u16, b: u16) -> u32 {
        self.bank_base
            + (u32::from(g) * u32::from(self.cfg.tiles_per_group) + u32::from(t))
                * u32::from(self.cfg.banks_per_tile)
            + u32::from(b)
    }

    fn bank_coords(&self, bank_comp: u32) -> (u16, u16, u16) {
        let rel = bank_comp - self.bank_base;
        let b = u32::from(self.cfg.banks_per_tile);
        let t = u32::from(self.cfg.tiles_per_group);
        let tile_lin = rel / b;
        ((tile_lin / t) as u16, (tile_lin % t) as u16, (rel % b) as u16)
    }

    fn router(&self, comp: u32) -> &Router {
        &self.routers[(comp - self.treq_base) as usize]
    }

    fn router_mut(&mut self, comp: u32) -> &mut Router {
        &mut self.routers[(comp - self.treq_base) as usize]
    }

    fn is_treq(&self, comp: u32) -> bool {
        (self.treq_base..self.greq_base).contains(&comp)
    }

    fn is_mesh(&self, comp: u32) -> bool {
        (self.mreq_base..self.bank_base).contains(&comp)
    }

    /// `(group, channel, is_response_net)` of a mesh router id.
    fn mesh_coords(&self, comp: u32) -> (u16, u16, bool) {
        let ch_n = u32::from(self.cfg.noc_instances());
        let (rel, resp) = if comp >= self.mresp_base {
            (comp - self.mresp_base, true)
        } else {
            (comp - self.mreq_base, false)
        };
        ((rel / ch_n) as u16, (rel % ch_n) as u16, resp)
    }

    fn treq_coords(&self, comp: u32) -> (u16, u16) {
        let rel = comp - self.treq_base;
        let t = u32::from(self.cfg.tiles_per_group);
        ((rel / t) as u16, (rel % t) as u16)
    }

    /// First inter-group output of a tile crossbar.
    fn mesh_out_base(&self) -> u16 {
        self.cfg.banks_per_tile + self.cfg.intra_group_ports_per_tile
    }

    // -- routing ----------------------------------------------------------

    /// Output port of the tile crossbar of `(g, t)` for a request.
    fn route_treq(&self, g: u16, t: u16, req: &Request) -> u16 {
        if req.dest.group != g {
            self.mesh_out_base() + self.cfg.mesh_port_for_bank(req.dest.bank)
        } else if req.dest.tile != t {
            self.cfg.banks_per_tile + self.cfg.group_port_for_bank(req.dest.bank)
        } else {
            req.dest.bank
        }
    }

    /// Output port of any router component for an arriving request.
    fn route_at(&self, comp: u32, req: &Request) -> u16 {
        if self.is_treq(comp) {
            let (g, t) = self.treq_coords(comp);
            self.route_treq(g, t, req)
        } else if comp < self.mreq_base {
            req.dest.tile
        } else {
            let (g, _, resp) = self.mesh_coords(comp);
            let target_group = if resp {
                self.pe_coords(req.initiator).0
            } else {
                req.dest.group
            };
            match next_dir(&self.cfg, g, target_group) {
                None => 0,
                Some(d) => 1 + d.index(),
            }
        }
    }

    /// Downstream of `(comp, output)` for the candidate head `req` at `now`.
    fn resolve_downstream(&mut self, comp: u32, output: u16, req: &Request, now: Cycle) -> Downstream {
        if self.is_treq(comp) {
            let (g, t) = self.treq_coords(comp);
            let banks = self.cfg.banks_per_tile;
            let mesh0 = self.mesh_out_base();
            if output < banks {
                Downstream::BankQueue { bank: self.bank_id(g, t, output) }
            } else if output < mesh0 {
                let ip = output - banks;
                Downstream::Queue {
                    comp: self.greq_id(g),
                    input: t * self.cfg.intra_group_ports_per_tile + ip,
                    channel: None,
                }
            } else {
                let flat_port = t * self.cfg.channels_per_tile + (output - mesh0);
                let channel = self.remapper.channel_for(g, now, flat_port);
                Downstream::Queue {
                    comp: self.mreq_id(g, channel),
                    input: 0,
                    channel: Some(channel),
                }
            }
        } else if comp < self.mreq_base {
            let g = (comp - self.greq_base) as u16;
            Downstream::Queue {
                comp: self.treq_id(g, output),
                input: self.cfg.pes_per_tile,
                channel: None,
            }
        } else {
            let (g, ch, resp) = self.mesh_coords(comp);
            if output == 0 {
                if resp {
                    Downstream::EjectStage
                } else {
                    Downstream::Queue {
                        comp: self.treq_id(g, req.dest.tile),
                        input: self.cfg.pes_per_tile + 1 + ch,
                        channel: None,
                    }
                }
            } else {
                let d = Dir::from_index(output - 1);
                let n = neighbor(&self.cfg, g, d).expect("route walked off the mesh");
                let dir_input = 1 + d.opposite().index();
                let (comp2, input) = if resp {
                    (self.mresp_id(n, ch), self.cfg.tiles_per_group + dir_input - 1)
                } else {
                    (self.mreq_id(n, ch), dir_input)
                };
                Downstream::Queue { comp: comp2, input, channel: None }
            }
        }
    }

    /// The component that refills queue `(comp, input)` when space returns.
    fn producer_of(&self, comp: u32, input: u16) -> Producer {
        if comp >= self.bank_base {
            let (g, t, b) = self.bank_coords(comp);
            return Producer::Port { comp: self.treq_id(g, t), output: b };
        }
        if self.is_treq(comp) {
            let (g, t) = self.treq_coords(comp);
            let p = self.cfg.pes_per_tile;
            if input < p {
                let pe = (u32::from(g) * u32::from(self.cfg.tiles_per_group) + u32::from(t))
                    * u32::from(p)
                    + u32::from(input);
                Producer::Pe(pe)
            } else if input == p {
                Producer::Port { comp: self.greq_id(g), output: t }
            } else {
                Producer::Port { comp: self.mreq_id(g, input - p - 1), output: 0 }
            }
        } else if comp < self.mreq_base {
            let g = (comp - self.greq_base) as u16;
            let t = input / self.cfg.intra_group_ports_per_tile;
            let ip = input % self.cfg.intra_group_ports_per_tile;
            Producer::Port {
                comp: self.treq_id(g, t),
                output: self.cfg.banks_per_tile + ip,
            }
        } else {
            let (g, ch, resp) = self.mesh_coords(comp);
            let dir_slot = if resp {
                if input < self.cfg.tiles_per_group {
                    return Producer::Flush;
                }
                input - self.cfg.tiles_per_group
            } else {
                if input == 0 {
                    return if self.remapper.is_static() {
                        let t = ch / self.cfg.channels_per_tile;
                        let c = ch % self.cfg.channels_per_tile;
                        Producer::Port {
                            comp: self.treq_id(g, t),
                            output: self.mesh_out_base() + c,
                        }
                    } else {
                        // Any tile may map onto this channel next cycle;
                        // blocked ports retry on their own every cycle.
                        Producer::Flush
                    };
                }
                input - 1
            };
            let d_in = Dir::from_index(dir_slot);
            let n = neighbor(&self.cfg, g, d_in).expect("mesh input from off-mesh neighbor");
            let comp2 = if resp { self.mresp_id(n, ch) } else { self.mreq_id(n, ch) };
            Producer::Port { comp: comp2, output: 1 + d_in.opposite().index() }
        }
    }

    // -- event plumbing ---------------------------------------------------

    fn sched(&mut self, at: Cycle, ev: Ev) -> Result<()> {
        self.engine.schedule_at(at, ev)?;
        Ok(())
    }

    /// Schedules a zero-delay evaluation, coalescing duplicates per cycle.
    fn sched_eval(&mut self, comp: u32, output: u16, now: Cycle) -> Result<()> {
        if self.driver != Driver::Events {
            return Ok(());
        }
        let port = &mut self.router_mut(comp).outputs[output as usize];
        if port.eval_marker == Some(now) {
            return Ok(());
        }
        port.eval_marker = Some(now);
        self.sched(now, Ev::Eval { comp, output })
    }

    fn sched_wake(&mut self, comp: u32, output: u16, at: Cycle) -> Result<()> {
        if self.driver != Driver::Events {
            return Ok(());
        }
        self.sched(at, Ev::Wake { comp, output })
    }

    fn note_activity(&mut self, now: Cycle) {
        self.last_activity = Some(self.last_activity.map_or(now, |a| a.max(now)));
    }

    // -- PE side ----------------------------------------------------------

    /// One issue attempt of `pe` at `now`; triggered by events in
    /// event-driven mode, called every cycle by the reference sweep.
    fn pe_try(&mut self, pe: u32, now: Cycle) -> Result<()> {
        let (g, t, p) = self.pe_coords(pe);
        let treq = self.treq_id(g, t);
        let credit_free = self.router(treq).queues[p as usize].free_slots > 0;
        let outcome = self.pes[pe as usize].attempt(now, credit_free, &mut self.barrier);
        match outcome {
            Attempt::Waiting(None) => {}
            Attempt::Waiting(Some(at)) => {
                if self.driver == Driver::Events && self.pe_wake_at[pe as usize] != Some(at) {
                    self.pe_wake_at[pe as usize] = Some(at);
                    self.sched(at, Ev::PeWake { pe })?;
                }
            }
            Attempt::AtBarrier { release_at } => {
                if let Some(r) = release_at {
                    self.sched(r, Ev::Release)?;
                }
            }
            Attempt::Issue { step } => {
                let planned = self.pes[pe as usize].plan[step];
                let dest = self.map.map(planned.addr)?;
                let id = self.next_id;
                self.next_id += 1;
                let req = Request {
                    id,
                    initiator: pe,
                    addr: planned.addr,
                    kind: planned.kind,
                    size: planned.size,
                    dest,
                    issued_at: now,
                    latency: 0,
                    duration: 0,
                    is_response: false,
                    channel: None,
                };
                self.pes[pe as usize].assign_id(id);
                self.issued += 1;
                self.note_activity(now);
                if let Some(traces) = &mut self.traces {
                    traces.insert(
                        id,
                        TraceRecord {
                            id,
                            pe,
                            kind: req.kind,
                            addr: req.addr,
                            size: req.size,
                            enqueue: now,
                            arbitrate: PHASE_UNSET,
                            dispatch: PHASE_UNSET,
                            serve: PHASE_UNSET,
                            respond: PHASE_UNSET,
                            latency: 0,
                            duration: 0,
                            hops: Vec::new(),
                        },
                    );
                }
                let out = self.route_treq(g, t, &req);
                let q = &mut self.router_mut(treq).queues[p as usize];
                q.free_slots -= 1;
                q.push(req, now, out);
                self.sched_eval(treq, out, now)?;
                if self.driver == Driver::Events && !self.pes[pe as usize].done() {
                    let at = now + 1;
                    if self.pe_wake_at[pe as usize] != Some(at) {
                        self.pe_wake_at[pe as usize] = Some(at);
                        self.sched(at, Ev::PeWake { pe })?;
                    }
                }
            }
        }
        Ok(())
    }

    // -- router side ------------------------------------------------------

    /// Arbitrates output `output` of router `comp` at cycle `now`.
    ///
    /// This is the shared grant path of both drivers: decide, check
    /// downstream space, commit, move the payload, schedule the credit and
    /// the follow-up wakes.
    fn eval_output(&mut self, comp: u32, output: u16, now: Cycle) -> Result<()> {
        let Decision::Grant { input, candidates } = self.router(comp).decide(output, now) else {
            return Ok(());
        };
        let head = self.router(comp).queues[input as usize].head().expect("granted head");
        let head_req = head.req.clone();
        let target = self.resolve_downstream(comp, output, &head_req, now);
        // Credit check against the downstream queue.
        let has_space = match &target {
            Downstream::Queue { comp: c2, input: i2, .. } => {
                self.router(*c2).queues[usize::from(*i2)].free_slots > 0
            }
            Downstream::BankQueue { bank } => {
                self.banks[(bank - self.bank_base) as usize].queue.free_slots > 0
            }
            Downstream::EjectStage => true,
        };
        if !has_space {
            self.router_mut(comp).note_blocked(output, now);
            // Under an active remapper the channel (and hence the full
            // queue) changes next cycle, so the port re-arbitrates itself.
            let dynamic = self.is_treq(comp) && output >= self.mesh_out_base();
            if dynamic && !self.remapper.is_static() {
                self.sched_wake(comp, output, now + 1)?;
            }
            return Ok(());
        }
        match &target {
            Downstream::Queue { comp: c2, input: i2, .. } => {
                self.router_mut(*c2).queues[usize::from(*i2)].free_slots -= 1;
            }
            Downstream::BankQueue { bank } => {
                self.banks[(bank - self.bank_base) as usize].queue.free_slots -= 1;
            }
            Downstream::EjectStage => {}
        }
        let granted = self.router_mut(comp).commit_grant(output, input, candidates, now);
        let wait = now - granted.entry.arrived;
        let base = granted.arrival - now;
        let mut req = granted.entry.req;
        if let Downstream::Queue { channel: Some(ch), .. } = target {
            req.channel = Some(ch);
        }
        if !req.is_response {
            if let Some(traces) = &mut self.traces {
                if let Some(rec) = traces.get_mut(&req.id) {
                    if rec.arbitrate == PHASE_UNSET {
                        rec.arbitrate = now;
                    }
                    rec.hops.push(HopRecord { component: comp, wait, base, duration: granted.duration });
                }
            }
        }
        if self.is_mesh(comp) {
            let (_, ch, _) = self.mesh_coords(comp);
            self.usage.record(now, usize::from(ch), granted.duration);
        }
        if self.is_treq(comp) && candidates >= 2 {
            // Conflicts at a tile's remote-request ports: either several
            // flows compete for a mesh-inject output, or several mesh-in
            // queues (inputs past the group port) compete inside the tile.
            let remote = output >= self.mesh_out_base() || input > self.cfg.pes_per_tile;
            if remote {
                if let Some(series) = &mut self.conflicts_over_time {
                    series.bump(now);
                }
            }
        }
        match target {
            Downstream::Queue { comp: c2, input: i2, .. } => {
                self.sched(granted.arrival, Ev::Arrive { comp: c2, input: i2, req })?;
            }
            Downstream::BankQueue { bank } => {
                self.sched(granted.arrival, Ev::Arrive { comp: bank, input: 0, req })?;
            }
            Downstream::EjectStage => {
                self.sched(granted.arrival, Ev::Eject { router: comp, req })?;
            }
        }
        self.sched(now + 1, Ev::Credit { comp, input })?;
        if granted.more_queued {
            let next_out = self.router(comp).queues[input as usize].head().expect("successor").out;
            self.sched_wake(comp, next_out, now + 1)?;
        }
        self.sched_wake(comp, output, granted.busy_until)?;
        Ok(())
    }

    // -- bank side --------------------------------------------------------

    fn bank_arrive(&mut self, bank_comp: u32, req: Request, now: Cycle) -> Result<()> {
        let b = (bank_comp - self.bank_base) as usize;
        if let Some(traces) = &mut self.traces {
            if let Some(rec) = traces.get_mut(&req.id) {
                rec.dispatch = now;
            }
        }
        self.banks[b].queue.push(req, now, 0);
        self.bank_try_start(bank_comp, now)
    }

    /// Starts the next access if the bank is idle, has no pending response
    /// handoff, is not parked, and its queue head was present at cycle
    /// start.
    fn bank_try_start(&mut self, bank_comp: u32, now: Cycle) -> Result<()> {
        let b = (bank_comp - self.bank_base) as usize;
        let bank = &mut self.banks[b];
        // `serving` stays set until the completion event is collected, which
        // can trail `busy_until` within the final cycle.
        if bank.busy_until > now
            || bank.serving.is_some()
            || bank.completed.is_some()
            || bank.parked.is_some()
            || !bank.queue.head_eligible(now)
        {
            return Ok(());
        }
        let entry = bank.queue.pop(now);
        let wait = now - entry.arrived;
        bank.stats.conflict_wait_cycles += wait;
        bank.stats.accesses += 1;
        let mut req = entry.req;
        req.latency += wait;
        let svc = bank_service_cycles(self.cfg.bank_service_cycles, &req);
        bank.busy_until = now + svc;
        let latency = req.latency;
        let duration = req.duration;
        bank.serving = Some(req.clone());
        if let Some(traces) = &mut self.traces {
            if let Some(rec) = traces.get_mut(&req.id) {
                rec.serve = now;
                rec.latency = latency;
                rec.duration = duration;
                rec.hops.push(HopRecord { component: bank_comp, wait, base: 0, duration: 0 });
            }
        }
        self.request_latency.push(latency);
        let done_at = bank.busy_until;
        self.sched(done_at, Ev::BankDone { bank: bank_comp })?;
        self.sched(now + 1, Ev::Credit { comp: bank_comp, input: 0 })?;
        Ok(())
    }

    /// Hands a serviced response toward its PE; returns false if it parked.
    fn dispatch_response(&mut self, bank_comp: u32, mut req: Request, now: Cycle) -> Result<bool> {
        let (gb, tb, _) = self.bank_coords(bank_comp);
        let pe = req.initiator;
        let (gp, tp, _) = self.pe_coords(pe);
        if gp == gb {
            let deliver_at = if tp == tb {
                self.pe_stage[pe as usize].pass(now, &mut req)
            } else {
                let up = usize::from(gb) * usize::from(self.cfg.tiles_per_group) + usize::from(tb);
                let down = usize::from(gb) * usize::from(self.cfg.tiles_per_group) + usize::from(tp);
                let a = self.tile_up_stage[up].pass(now, &mut req);
                let c = self.group_stage[down].pass(a, &mut req);
                self.pe_stage[pe as usize].pass(c, &mut req)
            };
            self.sched(deliver_at, Ev::Deliver { pe, req })?;
            return Ok(true);
        }
        let ch = req.channel.expect("inter-group response without a recorded channel");
        let mresp = self.mresp_id(gb, ch);
        let q = &mut self.router_mut(mresp).queues[usize::from(tb)];
        if q.free_slots == 0 {
            return Ok(false);
        }
        q.free_slots -= 1;
        req.latency += u64::from(self.cfg.tile_xbar_cycles);
        let arrival = now + u64::from(self.cfg.tile_xbar_cycles);
        self.sched(arrival, Ev::Arrive { comp: mresp, input: tb, req })?;
        Ok(true)
    }

    /// Walks an ejected response through its destination tile to the PE.
    fn eject_walk(&mut self, mut req: Request, now: Cycle) -> Result<()> {
        let pe = req.initiator;
        let deliver_at = self.pe_stage[pe as usize].pass(now, &mut req);
        self.sched(deliver_at, Ev::Deliver { pe, req })?;
        Ok(())
    }

    // -- end-of-cycle flush ----------------------------------------------

    /// Executes the response-side work of cycle `now` in component-id order:
    /// mesh ejection walks, bank response handoffs, parked retries, and the
    /// service starts that follow them.
    fn run_flush(&mut self, now: Cycle) -> Result<()> {
        if self.flush_actions.is_empty() && self.parked_banks.is_empty() {
            return Ok(());
        }
        let mut actions = std::mem::take(&mut self.flush_actions);
        for &b in &self.parked_banks {
            actions.push((b, FlushAction::ParkedRetry));
        }
        actions.sort_by_key(|(comp, _)| *comp);
        for (comp, action) in actions {
            match action {
                FlushAction::EjectWalk(req) => self.eject_walk(req, now)?,
                FlushAction::BankCompletion => {
                    let b = (comp - self.bank_base) as usize;
                    let req = self.banks[b].completed.take().expect("completion pending");
                    if self.dispatch_response(comp, req.clone(), now)? {
                        self.bank_try_start(comp, now)?;
                    } else {
                        let bank = &mut self.banks[b];
                        bank.parked = Some(req);
                        bank.parked_since = now;
                        self.parked_banks.push(comp);
                        self.parked_banks.sort_unstable();
                    }
                }
                FlushAction::ParkedRetry => {
                    let b = (comp - self.bank_base) as usize;
                    let req = self.banks[b].parked.clone().expect("parked response");
                    if self.dispatch_response(comp, req, now)? {
                        let bank = &mut self.banks[b];
                        bank.parked = None;
                        bank.stats.response_blocked_cycles += now - bank.parked_since;
                        self.parked_banks.retain(|&x| x != comp);
                        self.bank_try_start(comp, now)?;
                    }
                }
            }
        }
        Ok(())
    }

    // -- event dispatch ---------------------------------------------------

    fn handle(&mut self, now: Cycle, ev: Ev) -> Result<()> {
        match ev {
            Ev::Arrive { comp, input, req } => {
                if comp >= self.bank_base {
                    self.bank_arrive(comp, req, now)?;
                } else {
                    let out = self.route_at(comp, &req);
                    self.router_mut(comp).queues[usize::from(input)].push(req, now, out);
                    self.sched_eval(comp, out, now)?;
                }
            }
            Ev::Eject { router, req } => {
                self.flush_actions.push((router, FlushAction::EjectWalk(req)));
            }
            Ev::Deliver { pe, req } => {
                self.delivered += 1;
                self.note_activity(now);
                self.pes[pe as usize].on_response(req.id);
                self.round_trip.push(now - req.issued_at);
                if let Some(traces) = &mut self.traces {
                    if let Some(rec) = traces.get_mut(&req.id) {
                        rec.respond = now;
                    }
                }
                if self.driver == Driver::Events {
                    self.pe_try(pe, now)?;
                }
            }
            Ev::Credit { comp, input } => {
                if comp >= self.bank_base {
                    self.banks[(comp - self.bank_base) as usize].queue.free_slots += 1;
                } else {
                    self.router_mut(comp).queues[usize::from(input)].free_slots += 1;
                }
                if self.driver == Driver::Events {
                    match self.producer_of(comp, input) {
                        Producer::Pe(pe) => self.pe_try(pe, now)?,
                        Producer::Port { comp: c2, output } => self.sched_eval(c2, output, now)?,
                        Producer::Flush => {}
                    }
                }
            }
            Ev::Wake { comp, output } => {
                self.sched_eval(comp, output, now)?;
            }
            Ev::Eval { comp, output } => {
                self.eval_output(comp, output, now)?;
            }
            Ev::PeWake { pe } => {
                if self.pe_wake_at[pe as usize] == Some(now) {
                    self.pe_wake_at[pe as usize] = None;
                }
                self.pe_try(pe, now)?;
            }
            Ev::BankDone { bank } => {
                let b = (bank - self.bank_base) as usize;
                let mut req = self.banks[b].serving.take().expect("bank was serving");
                req.is_response = true;
                self.banks[b].completed = Some(req);
                self.flush_actions.push((bank, FlushAction::BankCompletion));
            }
            Ev::Release => {
                for pe in 0..self.pes.len() as u32 {
                    if self.pes[pe as usize].at_barrier() {
                        self.pes[pe as usize].on_barrier_release(now);
                        if self.driver == Driver::Events {
                            self.pe_try(pe, now)?;
                        }
                    }
                }
                self.barrier.reset();
            }
        }
        Ok(())
    }

    // -- run loops --------------------------------------------------------

    /// Event-driven run until completion or `max_cycles`.
    pub fn run(&mut self, max_cycles: Cycle) -> Result<RunStatus> {
        assert_eq!(self.driver, Driver::Events, "use oracle::run_sweep for the reference driver");
        let mut flush_due: Option<Cycle> = None;
        loop {
            let next = self.engine.peek_time();
            if let Some(u) = flush_due {
                if next.is_none_or(|t| t > u) {
                    self.run_flush(u)?;
                    flush_due = None;
                    continue;
                }
            }
            match next {
                None => break,
                Some(t) if t > max_cycles => {
                    let outstanding = self.issued - self.delivered;
                    self.finalize();
                    return Ok(RunStatus::BudgetExceeded { outstanding });
                }
                Some(_) => {
                    let (at, ev) = self.engine.pop().expect("peeked event");
                    flush_due = Some(at);
                    self.handle(at, ev)?;
                }
            }
        }
        let outstanding: u64 = self.pes.iter().map(|p| u64::from(p.in_flight)).sum();
        let unfinished = self.pes.iter().filter(|p| !p.done()).count();
        if outstanding > 0 || unfinished > 0 {
            return Err(SimError::Stalled {
                cycle: self.engine.now(),
                outstanding: outstanding + unfinished as u64,
            });
        }
        self.finalize();
        Ok(RunStatus::Finished)
    }

    /// All PEs retired their plans and every response arrived.
    pub fn work_complete(&self) -> bool {
        self.pes.iter().all(|p| p.done() && p.in_flight == 0)
    }

    /// Number of simulated cycles: the cycle after the last PE activity.
    pub fn total_cycles(&self) -> Cycle {
        self.last_activity.map_or(0, |a| a + 1)
    }

    /// Closes every open accounting interval. Idempotent.
    pub fn finalize(&mut self) {
        if self.finalized {
            return;
        }
        self.finalized = true;
        let end = self.total_cycles();
        for pe in &mut self.pes {
            pe.finalize(end);
        }
        for r in &mut self.routers {
            r.finalize(end);
        }
        for bank in &mut self.banks {
            bank.queue.finalize(end);
        }
    }

    // -- oracle access (internals the per-cycle sweep drives directly) ----

    pub(crate) fn sweep_phase_transport(&mut self, cycle: Cycle) -> Result<()> {
        while let Some((_, ev)) = self.engine.pop_at_most(cycle) {
            match ev {
                Ev::Eval { .. } | Ev::Wake { .. } | Ev::PeWake { .. } => {}
                other => self.handle(cycle, other)?,
            }
        }
        Ok(())
    }

    pub(crate) fn sweep_phase_pes(&mut self, cycle: Cycle) -> Result<()> {
        for pe in 0..self.pes.len() as u32 {
            if !self.pes[pe as usize].done() || self.pes[pe as usize].in_flight > 0 {
                self.pe_try(pe, cycle)?;
            }
        }
        Ok(())
    }

    pub(crate) fn sweep_phase_routers(&mut self, cycle: Cycle) -> Result<()> {
        for idx in 0..self.routers.len() {
            let comp = self.treq_base + idx as u32;
            for out in 0..self.routers[idx].spec.outputs {
                self.eval_output(comp, out, cycle)?;
            }
        }
        Ok(())
    }

    pub(crate) fn sweep_phase_flush(&mut self, cycle: Cycle) -> Result<()> {
        self.run_flush(cycle)
    }

    pub(crate) fn events_pending(&self) -> bool {
        !self.engine.is_empty()
    }

    // -- reporting --------------------------------------------------------

    pub fn pes(&self) -> &[PeState] {
        &self.pes
    }

    pub fn bank_stats(&self) -> impl Iterator<Item = &BankStats> {
        self.banks.iter().map(|b| &b.stats)
    }

    pub fn routers_all(&self) -> &[Router] {
        &self.routers
    }

    pub fn stages(&self) -> impl Iterator<Item = &SyncStage> {
        self.pe_stage
            .iter()
            .chain(self.tile_up_stage.iter())
            .chain(self.group_stage.iter())
    }

    pub fn remapper(&self) -> &Remapper {
        &self.remapper
    }

    /// Flat integer census of every counter in the system, labeled; used to
    /// compare two drivers exactly and to explain the first divergence.
    pub fn census(&self) -> Vec<(String, u64)> {
        let mut out = Vec::new();
        out.push(("issued".into(), self.issued));
        out.push(("delivered".into(), self.delivered));
        out.push((
            "last_activity+1".into(),
            self.last_activity.map_or(0, |a| a + 1),
        ));
        for (i, pe) in self.pes.iter().enumerate() {
            let c = pe.counters;
            for (name, v) in [
                ("reads", c.reads),
                ("writes", c.writes),
                ("atomics", c.atomics),
                ("responses", c.responses),
                ("active", c.active_cycles),
                ("lsu_full", c.lsu_full_cycles),
                ("load_use", c.load_use_cycles),
                ("barrier", c.barrier_cycles),
                ("idle", c.idle_cycles),
            ] {
                out.push((format!("pe{i}.{name}"), v));
            }
        }
        for (i, bank) in self.banks.iter().enumerate() {
            let s = &bank.stats;
            out.push((format!("bank{i}.accesses"), s.accesses));
            out.push((format!("bank{i}.wait"), s.conflict_wait_cycles));
            out.push((format!("bank{i}.resp_blocked"), s.response_blocked_cycles));
            out.push((format!("bank{i}.enqueues"), bank.queue.stats.enqueues));
            out.push((
                format!("bank{i}.occupancy_weight"),
                bank.queue.stats.occupancy_weight,
            ));
        }
        for (i, r) in self.routers.iter().enumerate() {
            for (o, port) in r.outputs.iter().enumerate() {
                let s = &port.stats;
                if s.busy_cycles | s.transfers | s.conflicts | s.blocked_cycles != 0 {
                    out.push((format!("r{i}.out{o}.busy"), s.busy_cycles));
                    out.push((format!("r{i}.out{o}.transfers"), s.transfers));
                    out.push((format!("r{i}.out{o}.conflicts"), s.conflicts));
                    out.push((format!("r{i}.out{o}.blocked"), s.blocked_cycles));
                }
            }
            for (q, queue) in r.queues.iter().enumerate() {
                let s = &queue.stats;
                if s.enqueues != 0 {
                    out.push((format!("r{i}.q{q}.enqueues"), s.enqueues));
                    out.push((format!("r{i}.q{q}.max_occ"), u64::from(s.max_occupancy)));
                    out.push((format!("r{i}.q{q}.occ_weight"), s.occupancy_weight));
                }
            }
        }
        for (i, st) in self.stages().enumerate() {
            let s = &st.stats;
            if s.transfers != 0 {
                out.push((format!("stage{i}.busy"), s.busy_cycles));
                out.push((format!("stage{i}.transfers"), s.transfers));
                out.push((format!("stage{i}.conflicts"), s.conflicts));
            }
        }
        out
    }
}
