//! Brute-force per-cycle reference driver and exact-equivalence checking.
//!
//! The event-driven run of [`System`] fires arbitration only where wake-up
//! events point. The sweep here drives *the same* system type through an
//! exhaustive schedule instead: every cycle it applies pending transport
//! events, attempts every PE, arbitrates every router output in component
//! order, then runs the end-of-cycle flush. Because all per-cycle decisions
//! depend only on start-of-cycle state, both drivers must produce identical
//! counters everywhere; [`verify_equivalence`] runs both and compares their
//! full censuses, reporting the first diverging counter if any.

use crate::endpoints::{generate_plans, WorkloadSpec};
use crate::remap::RemapperConfig;
use crate::system::{Driver, Instrumentation, RunStatus, System};
use crate::topology::TopologyConfig;
use crate::{Cycle, Result};

/// Sorted `(counter name, value)` pairs covering every observable counter of
/// a finished run.
pub type Census = Vec<(String, u64)>;

/// Runs a cycle-sweep system to completion (or until `max_cycles`).
pub fn run_sweep(sys: &mut System, max_cycles: Cycle) -> Result<RunStatus> {
    let mut cycle: Cycle = 0;
    loop {
        if sys.work_complete() && !sys.events_pending() {
            break;
        }
        if cycle > max_cycles {
            let outstanding = sys.issued - sys.delivered;
            sys.finalize();
            return Ok(RunStatus::BudgetExceeded { outstanding });
        }
        sys.sweep_phase_transport(cycle)?;
        sys.sweep_phase_pes(cycle)?;
        sys.sweep_phase_routers(cycle)?;
        sys.sweep_phase_flush(cycle)?;
        cycle += 1;
    }
    sys.finalize();
    Ok(RunStatus::Finished)
}

/// Outcome of comparing the two drivers on one scenario.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Equivalence {
    /// Every counter matched; `cycles` is the common completion time.
    Match { cycles: Cycle },
    /// At least one counter differed; `detail` names the first one.
    Mismatch { detail: String },
}

/// First differing entry between two censuses, if any.
pub fn first_divergence(events: &[(String, u64)], sweep: &[(String, u64)]) -> Option<String> {
    let mut i = 0;
    loop {
        match (events.get(i), sweep.get(i)) {
            (None, None) => return None,
            (Some(a), None) => return Some(format!("{}={} only in event-driven run", a.0, a.1)),
            (None, Some(b)) => return Some(format!("{}={} only in sweep run", b.0, b.1)),
            (Some(a), Some(b)) => {
                if a.0 != b.0 {
                    return Some(format!("census order differs: {} vs {}", a.0, b.0));
                }
                if a.1 != b.1 {
                    return Some(format!("{}: event-driven {} vs sweep {}", a.0, a.1, b.1));
                }
            }
        }
        i += 1;
    }
}

/// Runs one workload under both drivers and compares every counter.
pub fn verify_equivalence(
    cfg: &TopologyConfig,
    remap: &RemapperConfig,
    spec: &WorkloadSpec,
    seed: u64,
    max_cycles: Cycle,
) -> Result<Equivalence> {
    let plans = generate_plans(spec, cfg, seed)?;
    let run_one = |driver: Driver| -> Result<(RunStatus, Census, Cycle)> {
        let mut sys = System::new(
            cfg.clone(),
            remap.clone(),
            plans.clone(),
            spec.max_outstanding,
            seed,
            driver,
            Instrumentation::default(),
        )?;
        let status = match driver {
            Driver::Events => sys.run(max_cycles)?,
            Driver::CycleSweep => run_sweep(&mut sys, max_cycles)?,
        };
        Ok((status, sys.census(), sys.total_cycles()))
    };
    let (st_e, census_e, cycles_e) = run_one(Driver::Events)?;
    let (st_s, census_s, cycles_s) = run_one(Driver::CycleSweep)?;
    if st_e != st_s {
        return Ok(Equivalence::Mismatch {
            detail: format!("run status: event-driven {st_e:?} vs sweep {st_s:?}"),
        });
    }
    if let Some(detail) = first_divergence(&census_e, &census_s) {
        return Ok(Equivalence::Mismatch { detail });
    }
    if cycles_e != cycles_s {
        return Ok(Equivalence::Mismatch {
            detail: format!("total cycles: event-driven {cycles_e} vs sweep {cycles_s}"),
        });
    }
    Ok(Equivalence::Match { cycles: cycles_e })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::endpoints::TrafficPattern;
    use crate::remap::{Assignment, RemapMode, Schedule};

    fn small_cfg() -> TopologyConfig {
        TopologyConfig {
            groups: 4,
            tiles_per_group: 4,
            pes_per_tile: 2,
            banks_per_tile: 4,
            bank_bytes: 64,
            ..TopologyConfig::default()
        }
    }

    fn expect_match(cfg: &TopologyConfig, remap: &RemapperConfig, spec: &WorkloadSpec, seed: u64) {
        match verify_equivalence(cfg, remap, spec, seed, 200_000).unwrap() {
            Equivalence::Match { .. } => {}
            Equivalence::Mismatch { detail } => panic!("drivers diverged: {detail}"),
        }
    }

    #[test]
    fn drivers_agree_on_uniform_random_traffic() {
        let spec = WorkloadSpec {
            pattern: TrafficPattern::UniformRandom,
            requests_per_pe: 25,
            write_fraction: 0.3,
            atomic_fraction: 0.05,
            ..WorkloadSpec::default()
        };
        for seed in [1, 2, 3] {
            expect_match(&small_cfg(), &RemapperConfig::default(), &spec, seed);
        }
    }

    #[test]
    fn drivers_agree_with_dependences_and_think_time() {
        let spec = WorkloadSpec {
            pattern: TrafficPattern::UniformRandom,
            requests_per_pe: 20,
            dependence_fraction: 0.5,
            think_cycles: 3,
            max_outstanding: 2,
            ..WorkloadSpec::default()
        };
        expect_match(&small_cfg(), &RemapperConfig::default(), &spec, 7);
    }

    #[test]
    fn drivers_agree_with_barriers() {
        let spec = WorkloadSpec {
            pattern: TrafficPattern::UniformRandom,
            requests_per_pe: 12,
            barrier_every: Some(4),
            ..WorkloadSpec::default()
        };
        expect_match(&small_cfg(), &RemapperConfig::default(), &spec, 9);
    }

    #[test]
    fn drivers_agree_under_dynamic_remapping() {
        let spec = WorkloadSpec {
            pattern: TrafficPattern::Hotspot {
                target_groups: vec![1, 2],
                skew: 0.7,
                bank_stride: 1,
            },
            requests_per_pe: 20,
            ..WorkloadSpec::default()
        };
        let remap = RemapperConfig {
            mode: RemapMode::Remap,
            partition_size: 4,
            assignment: Assignment::Contiguous,
            schedule: Schedule::PseudoRandom,
        };
        for seed in [4, 5] {
            expect_match(&small_cfg(), &remap, &spec, seed);
        }
    }

    #[test]
    fn drivers_agree_on_bursty_wide_transfers() {
        let spec = WorkloadSpec {
            pattern: TrafficPattern::Bursty {
                burst_len: 4,
                period: 12,
                class: crate::endpoints::AddrClass::Uniform,
            },
            requests_per_pe: 16,
            size_bytes: 16,
            write_fraction: 0.5,
            stagger_stride: 2,
            ..WorkloadSpec::default()
        };
        expect_match(&small_cfg(), &RemapperConfig::default(), &spec, 13);
    }

    #[test]
    fn first_divergence_pinpoints_the_counter() {
        let a = vec![("x".to_string(), 1), ("y".to_string(), 2)];
        let b = vec![("x".to_string(), 1), ("y".to_string(), 3)];
        let d = first_divergence(&a, &b).unwrap();
        assert!(d.contains('y'), "got: {d}");
        assert!(first_divergence(&a, &a).is_none());
    }
}
