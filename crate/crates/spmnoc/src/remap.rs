//! Dynamic port-to-channel remapping for the inter-group NoC layer.
//!
//! Statically, the inter-group port `p` of a tile always injects into NoC
//! channel `p` (flat numbering: `tile * channels_per_tile + local_port`).
//! Structured access patterns can then concentrate traffic on a fixed
//! subset of channels while the rest sit idle. The remapper breaks this up:
//! each cycle it applies a fresh pseudo-random permutation of ports onto
//! channels, drawn independently per group and keyed by
//! `(seed, cycle, group, block)` so both simulator backends and repeated
//! runs agree exactly.
//!
//! Permutations are confined to *partition blocks*: with partition size k,
//! the 32 ports split into 32/k blocks and each block's ports shuffle only
//! onto that block's channels. Small blocks bound how far a request can
//! stray from its home channel; block size 32 gives full freedom. Because
//! every per-cycle table is a bijection, at most one port feeds any channel
//! per cycle, which keeps channel injection single-producer.

use serde::{Deserialize, Serialize};

use crate::rng::{mix_key, shuffle, SplitMix64};
use crate::{Cycle, Result, SimError};

/// Whether ports are remapped at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RemapMode {
    /// Fixed port-to-channel wiring.
    #[default]
    Static,
    /// Per-cycle permutations.
    Remap,
}

/// How ports group into partition blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Assignment {
    /// Block b holds ports `[b*k, (b+1)*k)`.
    #[default]
    Contiguous,
    /// Block b holds ports congruent to b modulo the block count.
    Interleaved,
    /// Explicit block id per port.
    Custom(Vec<u16>),
}

/// Source of the per-cycle permutations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    /// Keyed Fisher-Yates shuffle per `(cycle, group, block)`.
    #[default]
    PseudoRandom,
    /// Port maps to itself every cycle; behaves exactly like static mode
    /// and exists to validate the remap plumbing.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemapperConfig {
    pub mode: RemapMode,
    /// Ports per permutation block.
    pub partition_size: u16,
    pub assignment: Assignment,
    pub schedule: Schedule,
}

impl Default for RemapperConfig {
    fn default() -> Self {
        RemapperConfig {
            mode: RemapMode::Static,
            partition_size: 4,
            assignment: Assignment::Contiguous,
            schedule: Schedule::PseudoRandom,
        }
    }
}

/// Per-group cached mapping for one cycle.
#[derive(Debug, Clone)]
struct CacheSlot {
    cycle: Cycle,
    table: Vec<u16>,
}

/// Computes port-to-channel mappings on demand.
#[derive(Debug, Clone)]
pub struct Remapper {
    cfg: RemapperConfig,
    channels: u16,
    seed: u64,
    /// Ordered member ports of each block.
    blocks: Vec<Vec<u16>>,
    cache: Vec<CacheSlot>,
}

impl Remapper {
    pub fn new(cfg: RemapperConfig, channels: u16, groups: u16, seed: u64) -> Result<Self> {
        let blocks = build_blocks(&cfg, channels)?;
        let identity: Vec<u16> = (0..channels).collect();
        Ok(Remapper {
            cfg,
            channels,
            seed,
            blocks,
            cache: vec![
                CacheSlot { cycle: Cycle::MAX, table: identity };
                usize::from(groups)
            ],
        })
    }

    pub fn config(&self) -> &RemapperConfig {
        &self.cfg
    }

    /// True when the mapping never changes (static wiring or identity
    /// schedule): ports keep their home channels and injection takes no
    /// extra remap stage.
    pub fn is_static(&self) -> bool {
        self.cfg.mode == RemapMode::Static || self.cfg.schedule == Schedule::Identity
    }

    /// Extra cycles the remap stage adds on channel injection.
    pub fn inject_extra_cycles(&self) -> u32 {
        u32::from(!self.is_static())
    }

    /// The port-to-channel table of `group` at `cycle`.
    pub fn table(&mut self, group: u16, cycle: Cycle) -> &[u16] {
        if self.is_static() {
            // Slot 0 permanently holds the identity table.
            return &self.cache[0].table;
        }
        let slot = &mut self.cache[usize::from(group)];
        if slot.cycle != cycle {
            slot.cycle = cycle;
            fill_table(
                &mut slot.table,
                &self.blocks,
                self.seed,
                cycle,
                group,
            );
        }
        &slot.table
    }

    /// Channel assigned to `port` of `group` at `cycle`.
    pub fn channel_for(&mut self, group: u16, cycle: Cycle, port: u16) -> u16 {
        self.table(group, cycle)[usize::from(port)]
    }

    pub fn channels(&self) -> u16 {
        self.channels
    }
}

fn build_blocks(cfg: &RemapperConfig, channels: u16) -> Result<Vec<Vec<u16>>> {
    let k = cfg.partition_size;
    if k == 0 || !channels.is_multiple_of(k) {
        return Err(SimError::Config(format!(
            "partition_size {k} must divide the channel count {channels}"
        )));
    }
    let nblocks = channels / k;
    let mut blocks: Vec<Vec<u16>> = vec![Vec::with_capacity(usize::from(k)); usize::from(nblocks)];
    match &cfg.assignment {
        Assignment::Contiguous => {
            for p in 0..channels {
                blocks[usize::from(p / k)].push(p);
            }
        }
        Assignment::Interleaved => {
            for p in 0..channels {
                blocks[usize::from(p % nblocks)].push(p);
            }
        }
        Assignment::Custom(ids) => {
            if ids.len() != usize::from(channels) {
                return Err(SimError::Config(format!(
                    "custom assignment lists {} ports, expected {channels}",
                    ids.len()
                )));
            }
            for (p, &b) in ids.iter().enumerate() {
                if b >= nblocks {
                    return Err(SimError::Config(format!(
                        "port {p} assigned to block {b}, only {nblocks} blocks exist"
                    )));
                }
                blocks[usize::from(b)].push(p as u16);
            }
            if let Some((b, blk)) = blocks.iter().enumerate().find(|(_, blk)| blk.len() != usize::from(k)) {
                return Err(SimError::Config(format!(
                    "block {b} has {} ports, expected {k}",
                    blk.len()
                )));
            }
        }
    }
    Ok(blocks)
}

/// Builds the full port-to-channel permutation for `(group, cycle)`.
fn fill_table(table: &mut Vec<u16>, blocks: &[Vec<u16>], seed: u64, cycle: Cycle, group: u16) {
    let channels: usize = blocks.iter().map(Vec::len).sum();
    table.clear();
    table.resize(channels, 0);
    let mut shuffled = Vec::new();
    for (b, members) in blocks.iter().enumerate() {
        shuffled.clone_from(members);
        let mut rng = SplitMix64::stream(
            seed,
            mix_key(&[0x0072_656d_6170, cycle, u64::from(group), b as u64]),
        );
        shuffle(&mut shuffled, &mut rng);
        for (&port, &chan) in members.iter().zip(&shuffled) {
            table[usize::from(port)] = chan;
        }
    }
}

// ---------------------------------------------------------------------------
// Imbalance metrics
// ---------------------------------------------------------------------------

/// Coefficient of variation (population standard deviation over mean) of a
/// load vector; 0 when the total load is zero.
pub fn coefficient_of_variation(loads: &[u64]) -> f64 {
    if loads.is_empty() {
        return 0.0;
    }
    let n = loads.len() as f64;
    let mean = loads.iter().sum::<u64>() as f64 / n;
    if mean == 0.0 {
        return 0.0;
    }
    let var = loads
        .iter()
        .map(|&x| {
            let d = x as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    var.sqrt() / mean
}

/// Fixed-length windows of per-channel activity, for tracking how channel
/// load imbalance evolves over time.
#[derive(Debug, Clone)]
pub struct UsageWindows {
    channels: usize,
    window_len: Cycle,
    /// `windows[w][c]` = busy cycles of channel c during window w.
    windows: Vec<Vec<u64>>,
}

pub const DEFAULT_USAGE_WINDOW: Cycle = 256;

impl UsageWindows {
    pub fn new(channels: usize, window_len: Cycle) -> Self {
        UsageWindows {
            channels,
            window_len: window_len.max(1),
            windows: Vec::new(),
        }
    }

    /// Records `busy` cycles of activity on `channel` starting at `cycle`.
    pub fn record(&mut self, cycle: Cycle, channel: usize, busy: u64) {
        let w = (cycle / self.window_len) as usize;
        while self.windows.len() <= w {
            self.windows.push(vec![0; self.channels]);
        }
        self.windows[w][channel] += busy;
    }

    pub fn windows(&self) -> &[Vec<u64>] {
        &self.windows
    }

    /// Total per-channel load across all windows.
    pub fn totals(&self) -> Vec<u64> {
        let mut totals = vec![0u64; self.channels];
        for w in &self.windows {
            for (t, &x) in totals.iter_mut().zip(w) {
                *t += x;
            }
        }
        totals
    }

    /// Spatial CV of the total load across channels.
    pub fn spatial_cv(&self) -> f64 {
        coefficient_of_variation(&self.totals())
    }

    /// Spatial CV inside each window (temporal profile of the imbalance).
    pub fn per_window_cv(&self) -> Vec<f64> {
        self.windows.iter().map(|w| coefficient_of_variation(w)).collect()
    }
}
