//! Cluster topology: configuration, address interleaving and the calibrated
//! zero-load latency model.
//!
//! The hierarchy is tile -> group -> cluster. Addresses interleave at word
//! granularity with the bank index in the lowest position, so consecutive
//! words stripe across the banks of one tile, then across tiles, then across
//! groups. Groups sit on a square 2D mesh addressed in row-major order.
//!
//! Latency calibration (defaults): an intra-tile access reaches its bank in
//! 1 cycle, an intra-group access in 3, and an inter-group access in
//! `mesh_overhead_cycles + mesh_hop_cycles * manhattan(src, dst)` =
//! 3 + 4h cycles one way — 7 cycles between adjacent groups and 13.67 on
//! average across all ordered group pairs of a 4x4 mesh. The overhead term
//! covers both tile crossbars plus the mesh ejection stage; the per-hop term
//! is the router-to-router link traversal.

use serde::{Deserialize, Serialize};

use crate::request::{BankLoc, WORD_BYTES};
use crate::router::RrUpdate;
use crate::{Result, SimError};

/// Static description of the simulated cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    /// Number of groups; must be a perfect square (mesh layout) or 1.
    pub groups: u16,
    pub tiles_per_group: u16,
    pub pes_per_tile: u16,
    pub banks_per_tile: u16,
    /// Capacity of one SPM bank in bytes.
    pub bank_bytes: u32,
    /// Inter-group injection ports per tile; one request and one response
    /// mesh network exists per (tile, port).
    pub channels_per_tile: u16,
    /// Ports from each tile into the intra-group crossbar.
    pub intra_group_ports_per_tile: u16,
    /// Base latency of a tile crossbar traversal.
    pub tile_xbar_cycles: u32,
    /// Base latency of the intra-group crossbar traversal.
    pub group_xbar_cycles: u32,
    /// Mesh router-to-router link traversal cost.
    pub mesh_hop_cycles: u32,
    /// Fixed one-way overhead of an inter-group access (both tile crossbars
    /// plus mesh ejection); must leave at least 1 cycle for ejection.
    pub mesh_overhead_cycles: u32,
    pub bank_service_cycles: u32,
    /// Port width used by every router output.
    pub bytes_per_cycle: u32,
    /// Input queue depth of asynchronous routers.
    pub queue_capacity: u8,
    /// Round-robin pointer update policy for all routers.
    pub rr_update: RrUpdate,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig {
            groups: 16,
            tiles_per_group: 16,
            pes_per_tile: 4,
            banks_per_tile: 16,
            bank_bytes: 1024,
            channels_per_tile: 2,
            intra_group_ports_per_tile: 1,
            tile_xbar_cycles: 1,
            group_xbar_cycles: 1,
            mesh_hop_cycles: 4,
            mesh_overhead_cycles: 3,
            bank_service_cycles: 1,
            bytes_per_cycle: 4,
            queue_capacity: 2,
            rr_update: RrUpdate::PerGrant,
        }
    }
}

impl TopologyConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TopologyConfig = serde_json::from_str(text)
            .map_err(|e| SimError::Config(format!("bad topology config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(SimError::Config(msg));
        if self.groups == 0 || self.tiles_per_group == 0 || self.pes_per_tile == 0 {
            return err("groups, tiles_per_group and pes_per_tile must be nonzero".into());
        }
        if self.banks_per_tile == 0 || self.bank_bytes < WORD_BYTES {
            return err("banks_per_tile must be nonzero and bank_bytes at least one word".into());
        }
        if !self.bank_bytes.is_multiple_of(WORD_BYTES) {
            return err(format!(
                "bank_bytes {} is not a multiple of the word size",
                self.bank_bytes
            ));
        }
        if self.groups > 1 && self.mesh_cols() * self.mesh_cols() != self.groups {
            return err(format!(
                "groups = {} does not form a square mesh",
                self.groups
            ));
        }
        if self.channels_per_tile == 0 || self.intra_group_ports_per_tile == 0 {
            return err("per-tile port counts must be nonzero".into());
        }
        if self.tile_xbar_cycles == 0 || self.group_xbar_cycles == 0 || self.mesh_hop_cycles == 0 {
            return err("router base latencies must be at least 1 cycle".into());
        }
        if self.groups > 1 && self.mesh_overhead_cycles < 2 * self.tile_xbar_cycles + 1 {
            return err(format!(
                "mesh_overhead_cycles = {} must cover two tile crossbar traversals plus \
                 at least 1 ejection cycle ({} minimum)",
                self.mesh_overhead_cycles,
                2 * self.tile_xbar_cycles + 1
            ));
        }
        if self.bank_service_cycles == 0 {
            return err("bank_service_cycles must be at least 1".into());
        }
        if self.bytes_per_cycle == 0 || self.queue_capacity == 0 {
            return err("bytes_per_cycle and queue_capacity must be nonzero".into());
        }
        Ok(())
    }

    /// Mesh side length (groups are laid out row-major on a square).
    pub fn mesh_cols(&self) -> u16 {
        (self.groups as f64).sqrt().round() as u16
    }

    /// Mesh ejection stage latency, derived from the overhead calibration.
    pub fn mesh_eject_cycles(&self) -> u32 {
        self.mesh_overhead_cycles.saturating_sub(2 * self.tile_xbar_cycles)
    }

    pub fn total_pes(&self) -> u32 {
        u32::from(self.groups) * u32::from(self.tiles_per_group) * u32::from(self.pes_per_tile)
    }

    pub fn total_banks(&self) -> u32 {
        u32::from(self.groups) * u32::from(self.tiles_per_group) * u32::from(self.banks_per_tile)
    }

    pub fn total_bytes(&self) -> u64 {
        u64::from(self.total_banks()) * u64::from(self.bank_bytes)
    }

    /// Parallel narrow NoC instances per direction (request or response).
    pub fn noc_instances(&self) -> u16 {
        self.tiles_per_group * self.channels_per_tile
    }

    pub fn words_per_bank(&self) -> u32 {
        self.bank_bytes / WORD_BYTES
    }

    /// Which inter-group port of its tile a request to `bank` uses.
    ///
    /// The static rule interleaves by bank index, so address streams that
    /// touch all banks spread evenly over a tile's ports (and hence over the
    /// statically mapped channels), while constant-stride streams may
    /// degenerate onto a single port.
    pub fn mesh_port_for_bank(&self, bank: u16) -> u16 {
        bank % self.channels_per_tile
    }

    pub fn group_port_for_bank(&self, bank: u16) -> u16 {
        bank % self.intra_group_ports_per_tile
    }

    /// Static channel carrying traffic of `(tile, mesh port)`.
    pub fn static_channel(&self, tile: u16, port: u16) -> u16 {
        tile * self.channels_per_tile + port
    }

    pub fn group_coords(&self, group: u16) -> (u16, u16) {
        let cols = self.mesh_cols();
        (group % cols, group / cols)
    }

    pub fn manhattan(&self, a: u16, b: u16) -> u64 {
        let (ax, ay) = self.group_coords(a);
        let (bx, by) = self.group_coords(b);
        u64::from(ax.abs_diff(bx)) + u64::from(ay.abs_diff(by))
    }

    /// Analytic one-way zero-load request latency between two groups over
    /// the mesh (PE issue to bank arrival, no contention).
    pub fn zero_load_latency(&self, src: u16, dst: u16) -> u64 {
        u64::from(self.mesh_overhead_cycles) + u64::from(self.mesh_hop_cycles) * self.manhattan(src, dst)
    }

    /// Analytic one-way zero-load latency for any path class.
    pub fn zero_load_for(&self, class: PathClass) -> u64 {
        match class {
            PathClass::IntraTile => u64::from(self.tile_xbar_cycles),
            PathClass::IntraGroup => {
                u64::from(2 * self.tile_xbar_cycles) + u64::from(self.group_xbar_cycles)
            }
            PathClass::InterGroup { hops } => {
                u64::from(self.mesh_overhead_cycles) + u64::from(self.mesh_hop_cycles) * hops
            }
        }
    }

    pub fn address_map(&self) -> AddressMap {
        AddressMap {
            banks_per_tile: u64::from(self.banks_per_tile),
            tiles_per_group: u64::from(self.tiles_per_group),
            groups: u64::from(self.groups),
            words_per_bank: u64::from(self.words_per_bank()),
        }
    }
}

/// Step direction on the mesh (row-major coordinates, +x east, +y north).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dir {
    East,
    West,
    North,
    South,
}

impl Dir {
    pub const ALL: [Dir; 4] = [Dir::East, Dir::West, Dir::North, Dir::South];

    pub fn index(self) -> u16 {
        match self {
            Dir::East => 0,
            Dir::West => 1,
            Dir::North => 2,
            Dir::South => 3,
        }
    }

    pub fn from_index(i: u16) -> Dir {
        Self::ALL[usize::from(i)]
    }

    /// The input direction a neighbor sees for our output direction.
    pub fn opposite(self) -> Dir {
        match self {
            Dir::East => Dir::West,
            Dir::West => Dir::East,
            Dir::North => Dir::South,
            Dir::South => Dir::North,
        }
    }
}

/// Next hop under dimension-order (X then Y) routing, `None` on arrival.
pub fn next_dir(cfg: &TopologyConfig, at: u16, dst: u16) -> Option<Dir> {
    let (ax, ay) = cfg.group_coords(at);
    let (dx, dy) = cfg.group_coords(dst);
    if ax < dx {
        Some(Dir::East)
    } else if ax > dx {
        Some(Dir::West)
    } else if ay < dy {
        Some(Dir::North)
    } else if ay > dy {
        Some(Dir::South)
    } else {
        None
    }
}

/// Neighbor group index in a direction, if on the mesh.
pub fn neighbor(cfg: &TopologyConfig, group: u16, dir: Dir) -> Option<u16> {
    let cols = cfg.mesh_cols();
    let (x, y) = cfg.group_coords(group);
    let (nx, ny) = match dir {
        Dir::East => (x + 1, y),
        Dir::West => (x.wrapping_sub(1), y),
        Dir::North => (x, y + 1),
        Dir::South => (x, y.wrapping_sub(1)),
    };
    if nx < cols && ny < cols {
        Some(ny * cols + nx)
    } else {
        None
    }
}

/// Which level of the hierarchy a request traverses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathClass {
    IntraTile,
    IntraGroup,
    InterGroup { hops: u64 },
}

/// Classifies the path from an initiator `(group, tile)` to a bank.
pub fn classify(cfg: &TopologyConfig, src_group: u16, src_tile: u16, dest: BankLoc) -> PathClass {
    if dest.group != src_group {
        PathClass::InterGroup {
            hops: cfg.manhattan(src_group, dest.group),
        }
    } else if dest.tile != src_tile {
        PathClass::IntraGroup
    } else {
        PathClass::IntraTile
    }
}

/// Word-interleaved address decoder (bank index fastest).
#[derive(Debug, Clone, Copy)]
pub struct AddressMap {
    banks_per_tile: u64,
    tiles_per_group: u64,
    groups: u64,
    words_per_bank: u64,
}

impl AddressMap {
    /// Decodes a byte address into its serving bank.
    pub fn map(&self, addr: u64) -> Result<BankLoc> {
        let w = addr / u64::from(WORD_BYTES);
        let bank = w % self.banks_per_tile;
        let tile = (w / self.banks_per_tile) % self.tiles_per_group;
        let group = (w / (self.banks_per_tile * self.tiles_per_group)) % self.groups;
        let offset = w / (self.banks_per_tile * self.tiles_per_group * self.groups);
        if offset >= self.words_per_bank {
            return Err(SimError::Unmapped {
                addr,
                reason: format!(
                    "word offset {offset} exceeds bank capacity of {} words",
                    self.words_per_bank
                ),
            });
        }
        Ok(BankLoc {
            group: group as u16,
            tile: tile as u16,
            bank: bank as u16,
            offset: offset as u32,
        })
    }

    /// Inverse of [`AddressMap::map`] for word-aligned addresses.
    pub fn compose(&self, loc: BankLoc) -> u64 {
        let w = ((u64::from(loc.offset) * self.groups + u64::from(loc.group))
            * self.tiles_per_group
            + u64::from(loc.tile))
            * self.banks_per_tile
            + u64::from(loc.bank);
        w * u64::from(WORD_BYTES)
    }

    pub fn capacity_bytes(&self) -> u64 {
        self.banks_per_tile
            * self.tiles_per_group
            * self.groups
            * self.words_per_bank
            * u64::from(WORD_BYTES)
    }
}
