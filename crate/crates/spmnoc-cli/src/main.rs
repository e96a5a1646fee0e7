//! Command-line front end for the spmnoc interconnect simulator.
//!
//! One binary, four modes:
//!
//! * default: run a scenario and print/write its profile report,
//! * `--oracle`: run the event-driven engine and the brute-force per-cycle
//!   reference on the same scenario and compare every counter,
//! * `--sweep PATH`: evaluate the channel-assignment design space described
//!   by a sweep-spec JSON and emit a result CSV,
//! * `--calibrate`: measure the zero-load latency anchors against the
//!   analytic model.
//!
//! Exit status is 0 only when the requested work finished and every enabled
//! self-check passed. Log verbosity comes from `SIM_LOG_LEVEL`
//! (error|warn|info|debug; default warn).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::Parser;
use serde::Deserialize;

use spmnoc::endpoints::{AddrClass, TrafficPattern, WorkloadSpec};
use spmnoc::oracle::{verify_equivalence, Equivalence};
use spmnoc::profiling::trace_to_csv;
use spmnoc::remap::{Assignment, RemapMode};
use spmnoc::scenario::{
    best_row, calibration_checks, dse_sweep, run_scenario, run_scenario_with_trace, sweep_to_csv,
    SweepPoint,
};
use spmnoc::system::{Instrumentation, RunStatus};
use spmnoc::{Scenario, TopologyConfig};

#[derive(Parser, Debug)]
#[command(
    name = "spmnoc",
    version,
    about = "Event-driven timing simulator for hierarchical scratchpad-memory interconnects"
)]
struct Args {
    /// Topology configuration JSON (defaults to the built-in 1024-PE cluster).
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Workload: a builtin name (uniform, local-tile, local-group, hotspot,
    /// bursty, strided), a workload-spec JSON path, or a trace CSV path.
    #[arg(long, value_name = "PATH|NAME", default_value = "uniform")]
    workload: String,

    /// Workload generation / remapping seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,

    /// Cycle budget; exceeding it is an error exit.
    #[arg(long, value_name = "N")]
    max_cycles: Option<u64>,

    /// Record per-request traces (written as trace.csv under --report-dir).
    #[arg(long)]
    trace: bool,

    /// Output directory for report.json / trace.csv / sweep.csv.
    #[arg(long, value_name = "PATH")]
    report_dir: Option<PathBuf>,

    /// Channel-mapping mode override: static | remap.
    #[arg(long, value_name = "MODE")]
    remap: Option<String>,

    /// Remapper partition size override.
    #[arg(long, value_name = "N")]
    partition: Option<u16>,

    /// Verify event-driven vs per-cycle-reference equivalence, then exit.
    #[arg(long)]
    oracle: bool,

    /// Run the design-space sweep described by this JSON spec.
    #[arg(long, value_name = "PATH")]
    sweep: Option<PathBuf>,

    /// Check zero-load latency anchors against the analytic model, then exit.
    #[arg(long)]
    calibrate: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(
        env_logger::Env::default().filter_or("SIM_LOG_LEVEL", "warn"),
    )
    .format_timestamp(None)
    .init();
    let args = Args::parse();
    match dispatch(&args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(args: &Args) -> anyhow::Result<ExitCode> {
    if args.calibrate {
        return calibrate(args);
    }
    let (scenario, trace_text) = build_scenario(args)?;
    if args.oracle {
        return oracle(&scenario, trace_text.is_some());
    }
    if let Some(spec_path) = args.sweep.clone() {
        return sweep(args, &scenario, &spec_path);
    }
    run(args, &scenario, trace_text.as_deref())
}

// -- scenario assembly ------------------------------------------------------

fn load_topology(args: &Args) -> anyhow::Result<TopologyConfig> {
    match &args.config {
        None => Ok(TopologyConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            TopologyConfig::from_json(&text)
                .with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

enum WorkloadSource {
    Spec(WorkloadSpec),
    TraceText(String),
}

/// Builtin hotspot targets: the quarter of the groups starting a quarter in
/// (groups 5, 6, 9, 10 form the center block on the default 4x4 mesh via
/// `--workload hotspot` with a custom spec; the builtin uses a simple rule
/// that works at any size).
fn builtin_hotspot_targets(groups: u16) -> Vec<u16> {
    let count = (groups / 4).max(1);
    let start = groups / 4;
    (start..start + count).collect()
}

fn builtin_workload(name: &str, topology: &TopologyConfig) -> Option<WorkloadSpec> {
    let base = WorkloadSpec { total_requests: Some(1000), ..WorkloadSpec::default() };
    let pattern = match name {
        "uniform" => TrafficPattern::UniformRandom,
        "local-tile" => TrafficPattern::LocalTile,
        "local-group" => TrafficPattern::LocalGroup,
        "hotspot" => TrafficPattern::Hotspot {
            target_groups: builtin_hotspot_targets(topology.groups),
            skew: 0.8,
            bank_stride: 1,
        },
        "bursty" => TrafficPattern::Bursty { burst_len: 8, period: 64, class: AddrClass::Uniform },
        "strided" => TrafficPattern::Strided { stride_words: 4, pe_offset_words: 0 },
        _ => return None,
    };
    Some(WorkloadSpec { pattern, ..base })
}

fn resolve_workload(arg: &str, topology: &TopologyConfig) -> anyhow::Result<WorkloadSource> {
    if let Some(spec) = builtin_workload(arg, topology) {
        return Ok(WorkloadSource::Spec(spec));
    }
    let path = Path::new(arg);
    if !path.exists() {
        bail!(
            "workload '{arg}' is neither a builtin (uniform, local-tile, local-group, \
             hotspot, bursty, strided) nor a readable file"
        );
    }
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading workload {}", path.display()))?;
    let looks_like_trace = matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("csv") | Some("trace")
    ) || text.trim_start().starts_with("ready_cycle");
    if looks_like_trace {
        Ok(WorkloadSource::TraceText(text))
    } else {
        let spec = WorkloadSpec::from_json(&text)
            .with_context(|| format!("parsing workload {}", path.display()))?;
        Ok(WorkloadSource::Spec(spec))
    }
}

fn build_scenario(args: &Args) -> anyhow::Result<(Scenario, Option<String>)> {
    let mut sc = Scenario { topology: load_topology(args)?, ..Scenario::default() };
    sc.name = args.workload.clone();
    let trace_text = match resolve_workload(&args.workload, &sc.topology)? {
        WorkloadSource::Spec(w) => {
            sc.workload = w;
            None
        }
        WorkloadSource::TraceText(text) => {
            sc.workload.pattern = TrafficPattern::Trace;
            Some(text)
        }
    };
    if let Some(s) = args.seed {
        sc.seed = s;
    }
    if let Some(m) = args.max_cycles {
        sc.max_cycles = m;
    }
    if let Some(mode) = &args.remap {
        sc.remap.mode = match mode.as_str() {
            "static" => RemapMode::Static,
            "remap" => RemapMode::Remap,
            other => bail!("unknown --remap mode '{other}' (expected static or remap)"),
        };
    }
    if let Some(k) = args.partition {
        sc.remap.partition_size = k;
    }
    sc.validate().context("invalid scenario")?;
    Ok((sc, trace_text))
}

// -- modes ------------------------------------------------------------------

fn run(args: &Args, sc: &Scenario, trace_text: Option<&str>) -> anyhow::Result<ExitCode> {
    let instr = Instrumentation { trace: args.trace, conflict_series: false };
    let outcome = match trace_text {
        Some(text) => run_scenario_with_trace(sc, text, instr)?,
        None => run_scenario(sc, instr)?,
    };
    if let Some(dir) = &args.report_dir {
        fs::create_dir_all(dir)
            .with_context(|| format!("creating report dir {}", dir.display()))?;
        let report_path = dir.join("report.json");
        outcome.report.write_to(&report_path)?;
        println!("report: {}", report_path.display());
        if args.trace {
            let trace_path = dir.join("trace.csv");
            fs::write(&trace_path, trace_to_csv(&outcome.traces))
                .with_context(|| format!("writing {}", trace_path.display()))?;
            println!("trace: {}", trace_path.display());
        }
    }
    let r = &outcome.report;
    println!("total cycles: {}", r.total_cycles);
    println!("requests: {} issued, {} delivered", r.requests_issued, r.responses_delivered);
    println!(
        "request latency: mean {:.2}, p50 {}, p99 {}, max {}",
        r.request_latency.mean, r.request_latency.p50, r.request_latency.p99, r.request_latency.max
    );
    println!(
        "round trip: mean {:.2}, p99 {}",
        r.round_trip.mean, r.round_trip.p99
    );
    match outcome.status {
        RunStatus::BudgetExceeded { outstanding } => {
            eprintln!(
                "cycle budget {} exceeded with {outstanding} requests outstanding",
                sc.max_cycles
            );
            Ok(ExitCode::FAILURE)
        }
        RunStatus::Finished => {
            if let Err(msg) = r.self_check(u64::from(sc.topology.total_pes())) {
                eprintln!("self-check failed: {msg}");
                return Ok(ExitCode::FAILURE);
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn oracle(sc: &Scenario, is_trace: bool) -> anyhow::Result<ExitCode> {
    if is_trace {
        bail!("oracle verification replays generated workloads, not trace files");
    }
    if sc.topology.total_pes() > 64 {
        eprintln!(
            "warning: {} PEs is above the recommended oracle size; this will be slow",
            sc.topology.total_pes()
        );
    }
    match verify_equivalence(&sc.topology, &sc.remap, &sc.workload, sc.seed, sc.max_cycles)? {
        Equivalence::Match { cycles } => {
            println!("oracle equivalence: MATCH ({cycles} cycles)");
            Ok(ExitCode::SUCCESS)
        }
        Equivalence::Mismatch { detail } => {
            eprintln!("oracle equivalence: MISMATCH — {detail}");
            Ok(ExitCode::FAILURE)
        }
    }
}

/// Sweep description: which partition sizes, block shapes and seeds to run.
#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SweepSpec {
    partition_sizes: Vec<u16>,
    assignments: Vec<Assignment>,
    seeds: Vec<u64>,
    include_static: bool,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            partition_sizes: vec![2, 4, 8, 16, 32],
            assignments: vec![Assignment::Contiguous],
            seeds: Vec::new(),
            include_static: true,
        }
    }
}

fn sweep(args: &Args, sc: &Scenario, spec_path: &Path) -> anyhow::Result<ExitCode> {
    let text = fs::read_to_string(spec_path)
        .with_context(|| format!("reading sweep spec {}", spec_path.display()))?;
    let spec: SweepSpec = serde_json::from_str(&text)
        .with_context(|| format!("parsing sweep spec {}", spec_path.display()))?;
    let mut points = Vec::new();
    if spec.include_static {
        points.push(SweepPoint::fixed());
    }
    for &k in &spec.partition_sizes {
        for a in &spec.assignments {
            points.push(SweepPoint::remap(k, a.clone()));
        }
    }
    if points.is_empty() {
        bail!("sweep spec selects no configurations");
    }
    let seeds = if spec.seeds.is_empty() { vec![sc.seed] } else { spec.seeds.clone() };
    let rows = dse_sweep(sc, &points, &seeds)?;
    let csv = sweep_to_csv(&rows);
    match &args.report_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let out = dir.join("sweep.csv");
            fs::write(&out, &csv).with_context(|| format!("writing {}", out.display()))?;
            println!("sweep: {}", out.display());
        }
        None => print!("{csv}"),
    }
    if let Some(best) = best_row(&rows) {
        let label = match best.mode {
            RemapMode::Static => "static mapping".to_string(),
            RemapMode::Remap => format!("partition {}", best.partition_size),
        };
        println!(
            "best: {label} seed {} finished in {} cycles (channel CV {:.4})",
            best.seed, best.completion_cycles, best.spatial_cv
        );
    }
    let unfinished = rows.iter().filter(|r| !r.finished).count();
    if unfinished > 0 {
        eprintln!("{unfinished} sweep runs exceeded the cycle budget");
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn calibrate(args: &Args) -> anyhow::Result<ExitCode> {
    let topology = load_topology(args)?;
    let checks = calibration_checks(&topology)?;
    let mut all_ok = true;
    println!("zero-load calibration ({} groups, {} tiles/group):", topology.groups, topology.tiles_per_group);
    for c in &checks {
        let verdict = if c.passed() { "ok" } else { "FAIL" };
        all_ok &= c.passed();
        println!(
            "  {:<38} measured {:>8.3}  expected {:>8.3}  {}",
            c.label, c.measured, c.expected, verdict
        );
    }
    if all_ok {
        println!("calibration: PASS ({} checks)", checks.len());
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("calibration: FAIL");
        Ok(ExitCode::FAILURE)
    }
}
