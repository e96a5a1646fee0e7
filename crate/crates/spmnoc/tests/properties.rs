//! Randomized invariant checks. Each property holds for *every* input the
//! strategies can generate, not just the pinned cases in the unit and
//! acceptance suites: address decode/compose round-trips, remap tables stay
//! block-respecting permutations, the mesh distance is a metric, saturated
//! round-robin arbitration is fair to within one grant, percentile summaries
//! are ordered, and full runs conserve requests and account for every PE
//! cycle — with the event-driven engine and the cycle-sweep reference agreeing
//! on the result.

use proptest::prelude::*;

use spmnoc::endpoints::{TrafficPattern, WorkloadSpec};
use spmnoc::oracle::{verify_equivalence, Equivalence};
use spmnoc::profiling::LatencyCollector;
use spmnoc::remap::{Assignment, RemapMode, Remapper, RemapperConfig, Schedule};
use spmnoc::request::{AccessKind, BankLoc, Request, WORD_BYTES};
use spmnoc::router::{Decision, DispatchMode, Router, RouterSpec, RoutingPolicy};
use spmnoc::scenario::run_scenario;
use spmnoc::system::Instrumentation;
use spmnoc::{Scenario, TopologyConfig};

/// A small but varied topology: 1, 4, 9 or 16 groups with modest tile/bank
/// counts so whole-space sweeps and end-to-end runs stay fast.
fn small_topology() -> impl Strategy<Value = TopologyConfig> {
    (
        prop_oneof![Just(1u16), Just(4), Just(9), Just(16)],
        1u16..=4,
        1u16..=4,
        1u16..=8,
        1u32..=16,
    )
        .prop_map(|(groups, tiles, pes, banks, words)| TopologyConfig {
            groups,
            tiles_per_group: tiles,
            pes_per_tile: pes,
            banks_per_tile: banks,
            bank_bytes: words * WORD_BYTES,
            ..TopologyConfig::default()
        })
}

proptest! {
    /// Decoding any word-aligned address and re-encoding the result is the
    /// identity, decoded fields are in range, and the first out-of-capacity
    /// address is rejected.
    #[test]
    fn address_decode_compose_round_trips(
        cfg in small_topology(),
        pick in 0u64..1_000_000,
    ) {
        let map = cfg.address_map();
        let words = map.capacity_bytes() / u64::from(WORD_BYTES);
        let addr = (pick % words) * u64::from(WORD_BYTES);
        let loc = map.map(addr).unwrap();
        prop_assert!(loc.group < cfg.groups);
        prop_assert!(loc.tile < cfg.tiles_per_group);
        prop_assert!(loc.bank < cfg.banks_per_tile);
        prop_assert!(u64::from(loc.offset) < u64::from(cfg.words_per_bank()));
        prop_assert_eq!(map.compose(loc), addr);
        prop_assert!(map.map(map.capacity_bytes()).is_err());
    }

    /// Encoding any in-range bank location and decoding it back is the
    /// identity (the other direction of the round trip).
    #[test]
    fn address_compose_decode_round_trips(
        cfg in small_topology(),
        g in 0u16..16,
        t in 0u16..4,
        b in 0u16..8,
        w in 0u32..16,
    ) {
        let loc = BankLoc {
            group: g % cfg.groups,
            tile: t % cfg.tiles_per_group,
            bank: b % cfg.banks_per_tile,
            offset: w % cfg.words_per_bank(),
        };
        let map = cfg.address_map();
        prop_assert_eq!(map.map(map.compose(loc)).unwrap(), loc);
    }

    /// Word-interleaving means `banks_per_tile` consecutive words land on
    /// `banks_per_tile` distinct banks of one tile.
    #[test]
    fn consecutive_words_interleave_across_banks(
        cfg in small_topology(),
        pick in 0u64..1_000_000,
    ) {
        let map = cfg.address_map();
        let banks = u64::from(cfg.banks_per_tile);
        let words = map.capacity_bytes() / u64::from(WORD_BYTES);
        // Align the window so it cannot wrap into the next tile row.
        let start = (pick % words) / banks * banks;
        let mut seen = vec![false; banks as usize];
        let first = map.map(start * u64::from(WORD_BYTES)).unwrap();
        for i in 0..banks {
            let loc = map.map((start + i) * u64::from(WORD_BYTES)).unwrap();
            prop_assert_eq!((loc.group, loc.tile), (first.group, first.tile));
            prop_assert!(!seen[usize::from(loc.bank)], "bank {} repeated", loc.bank);
            seen[usize::from(loc.bank)] = true;
        }
    }

    /// The mesh distance between groups is a metric: zero only on the
    /// diagonal, symmetric, and obeying the triangle inequality. The
    /// zero-load latency is the affine image of that metric.
    #[test]
    fn mesh_distance_is_a_metric(
        groups in prop_oneof![Just(4u16), Just(9), Just(16)],
        a in 0u16..16,
        b in 0u16..16,
        c in 0u16..16,
    ) {
        let cfg = TopologyConfig { groups, ..TopologyConfig::default() };
        let (a, b, c) = (a % groups, b % groups, c % groups);
        prop_assert_eq!(cfg.manhattan(a, a), 0);
        prop_assert_eq!(cfg.manhattan(a, b), cfg.manhattan(b, a));
        prop_assert!(cfg.manhattan(a, c) <= cfg.manhattan(a, b) + cfg.manhattan(b, c));
        if a != b {
            prop_assert!(cfg.manhattan(a, b) >= 1);
        }
        let base = u64::from(cfg.mesh_overhead_cycles);
        let per_hop = u64::from(cfg.mesh_hop_cycles);
        prop_assert_eq!(cfg.zero_load_latency(a, b), base + per_hop * cfg.manhattan(a, b));
    }

    /// Remap tables are permutations that never move a port out of its
    /// partition block, for any channel count, block shape, group and cycle.
    #[test]
    fn remap_tables_are_block_respecting_permutations(
        shape in prop_oneof![
            Just((2u16, 2u16)), Just((4, 2)), Just((4, 4)), Just((8, 2)),
            Just((8, 4)), Just((8, 8)), Just((16, 4)), Just((32, 8)),
        ],
        interleaved in any::<bool>(),
        groups in 1u16..=16,
        group in 0u16..16,
        cycle in 0u64..1_000_000,
        seed in any::<u64>(),
    ) {
        let (channels, k) = shape;
        let assignment = if interleaved { Assignment::Interleaved } else { Assignment::Contiguous };
        let cfg = RemapperConfig {
            mode: RemapMode::Remap,
            partition_size: k,
            assignment: assignment.clone(),
            schedule: Schedule::PseudoRandom,
        };
        let block_of = |p: u16| match assignment {
            Assignment::Contiguous => p / k,
            Assignment::Interleaved => p % (channels / k),
            Assignment::Custom(_) => unreachable!(),
        };
        let mut remapper = Remapper::new(cfg, channels, groups, seed).unwrap();
        let group = group % groups;
        let mut hit = vec![false; usize::from(channels)];
        for p in 0..channels {
            let ch = remapper.channel_for(group, cycle, p);
            prop_assert!(ch < channels);
            prop_assert!(!hit[usize::from(ch)], "channel {} assigned twice", ch);
            hit[usize::from(ch)] = true;
            prop_assert_eq!(block_of(ch), block_of(p),
                "port {} left its block: {} -> {}", p, block_of(p), block_of(ch));
        }
        // The table is a pure function of (group, cycle).
        for p in 0..channels {
            let again = remapper.channel_for(group, cycle, p);
            prop_assert!(hit[usize::from(again)]);
        }
    }

    /// Static mode and the identity schedule both pin every port to the
    /// channel of the same index, for any cycle.
    #[test]
    fn static_and_identity_remaps_are_the_identity(
        static_mode in any::<bool>(),
        channels in prop_oneof![Just(2u16), Just(4), Just(8), Just(16)],
        cycle in 0u64..1_000_000,
        seed in any::<u64>(),
    ) {
        let cfg = RemapperConfig {
            mode: if static_mode { RemapMode::Static } else { RemapMode::Remap },
            partition_size: 2,
            assignment: Assignment::Contiguous,
            schedule: Schedule::Identity,
        };
        let mut remapper = Remapper::new(cfg, channels, 4, seed).unwrap();
        for p in 0..channels {
            prop_assert_eq!(remapper.channel_for(1, cycle, p), p);
        }
    }

    /// A round-robin output kept saturated by all inputs spreads its grants
    /// evenly: after any number of cycles the per-input counts differ by at
    /// most one, and every decision names all eligible candidates.
    #[test]
    fn saturated_round_robin_is_fair_within_one_grant(
        inputs in 2u16..=6,
        cycles in 1u64..400,
        offset in 0u16..6,
    ) {
        let spec = RouterSpec::new(inputs, 1, RoutingPolicy::FixedPort, DispatchMode::Asynchronous);
        let mut router = Router::new(spec);
        // Start the pointer at an arbitrary input so fairness cannot depend
        // on who wins first.
        router.outputs[0].rr_ptr = offset % inputs;
        let mut grants = vec![0u64; usize::from(inputs)];
        let mut next_id = 0u64;
        for now in 0..cycles {
            for input in 0..usize::from(inputs) {
                while router.queues[input].len() < usize::from(router.queues[input].capacity) {
                    let req = Request {
                        id: next_id,
                        initiator: input as u32,
                        addr: 0,
                        kind: AccessKind::Read,
                        size: WORD_BYTES,
                        dest: BankLoc { group: 0, tile: 0, bank: 0, offset: 0 },
                        issued_at: now,
                        latency: 0,
                        duration: 0,
                        is_response: false,
                        channel: None,
                    };
                    next_id += 1;
                    router.queues[input].push(req, now, 0);
                }
            }
            match router.decide(0, now) {
                Decision::Grant { input, candidates } => {
                    prop_assert_eq!(candidates, inputs);
                    router.commit_grant(0, input, candidates, now);
                    grants[usize::from(input)] += 1;
                }
                other => prop_assert!(false, "saturated router did not grant: {:?}", other),
            }
        }
        let lo = *grants.iter().min().unwrap();
        let hi = *grants.iter().max().unwrap();
        prop_assert!(hi - lo <= 1, "unfair grants {:?}", grants);
        prop_assert_eq!(grants.iter().sum::<u64>(), cycles);
    }

    /// Percentile summaries of any sample set are ordered and bounded:
    /// min <= mean <= max, p50 <= p99 <= max, and the count matches.
    #[test]
    fn latency_summaries_are_ordered(samples in prop::collection::vec(0u64..100_000, 1..400)) {
        let mut collector = LatencyCollector::default();
        for &s in &samples {
            collector.push(s);
        }
        let stats = collector.stats();
        let lo = *samples.iter().min().unwrap();
        let hi = *samples.iter().max().unwrap();
        prop_assert_eq!(stats.samples, samples.len() as u64);
        prop_assert_eq!(stats.max, hi);
        prop_assert!(stats.p50 <= stats.p99);
        prop_assert!(stats.p99 <= stats.max);
        prop_assert!(lo as f64 <= stats.mean && stats.mean <= hi as f64);
        prop_assert!(stats.p50 >= lo);
    }
}

/// Strategy for a valid randomized workload over a 4-group cluster.
fn small_workload() -> impl Strategy<Value = WorkloadSpec> {
    (
        prop_oneof![
            Just(TrafficPattern::UniformRandom),
            Just(TrafficPattern::LocalTile),
            Just(TrafficPattern::LocalGroup),
            Just(TrafficPattern::Hotspot {
                target_groups: vec![1, 2],
                skew: 0.8,
                bank_stride: 1,
            }),
            Just(TrafficPattern::Strided { stride_words: 3, pe_offset_words: 5 }),
        ],
        1u64..=24,
        0u32..=3u32,
        (0u8..=4, 0u8..=2, 0u8..=4),
        prop_oneof![Just(None), Just(Some(8u32))],
        1u16..=4,
    )
        .prop_map(
            |(pattern, requests_per_pe, think, (wf, af, df), barrier_every, window)| WorkloadSpec {
                pattern,
                requests_per_pe,
                total_requests: None,
                write_fraction: f64::from(wf) / 10.0,
                atomic_fraction: f64::from(af) / 10.0,
                dependence_fraction: f64::from(df) / 10.0,
                think_cycles: think,
                size_bytes: WORD_BYTES,
                stagger_stride: 0,
                barrier_every,
                max_outstanding: window,
            },
        )
}

fn four_group_cluster() -> TopologyConfig {
    TopologyConfig {
        groups: 4,
        tiles_per_group: 2,
        pes_per_tile: 2,
        banks_per_tile: 4,
        bank_bytes: 64,
        ..TopologyConfig::default()
    }
}

proptest! {
    // End-to-end runs are slower than the pure-function properties above, so
    // cap the case count; each case still covers a fresh workload and seed.
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Any run that finishes conserves requests — responses, bank accesses
    /// and kind totals all equal the issue count — and splits every PE's
    /// cycles exactly into the five stall/active/idle classes.
    #[test]
    fn finished_runs_conserve_requests_and_cycles(
        spec in small_workload(),
        seed in any::<u64>(),
        remap in any::<bool>(),
    ) {
        let mut sc = Scenario {
            topology: four_group_cluster(),
            workload: spec,
            seed,
            ..Scenario::default()
        };
        if remap {
            sc.remap.mode = RemapMode::Remap;
            sc.remap.partition_size = 2;
        }
        let out = run_scenario(&sc, Instrumentation::default()).unwrap();
        prop_assert_eq!(out.status, spmnoc::system::RunStatus::Finished);
        let r = &out.report;
        prop_assert_eq!(r.requests_issued, r.responses_delivered);
        prop_assert_eq!(r.requests_issued, r.bank_accesses);
        prop_assert_eq!(r.reads + r.writes + r.atomics, r.requests_issued);
        let pes = u64::from(sc.topology.total_pes());
        prop_assert!(r.self_check(pes).is_ok(), "self-check failed: {:?}", r.self_check(pes));
        for pe in &r.per_pe {
            let sum = pe.active + pe.lsu_full + pe.load_use + pe.barrier + pe.idle;
            prop_assert_eq!(sum, r.total_cycles, "PE {} cycle partition leaks", pe.pe);
            prop_assert_eq!(pe.reads + pe.writes + pe.atomics, pe.responses);
        }
    }

    /// The event-driven engine and the exhaustive cycle-sweep reference agree
    /// on every counter for any workload and seed.
    #[test]
    fn engine_matches_cycle_sweep_reference(
        spec in small_workload(),
        seed in any::<u64>(),
    ) {
        let cfg = four_group_cluster();
        let remap = RemapperConfig::default();
        match verify_equivalence(&cfg, &remap, &spec, seed, 1_000_000).unwrap() {
            Equivalence::Match { .. } => {}
            Equivalence::Mismatch { detail } => prop_assert!(false, "diverged: {detail}"),
        }
    }
}
