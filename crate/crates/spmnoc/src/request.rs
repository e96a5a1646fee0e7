//! Memory transactions flowing through the interconnect.
//!
//! One [`Request`] value travels the request network from its initiating PE
//! to the addressed bank, is turned around there, and travels the response
//! network back. Every hop accumulates timing into the same two fields:
//!
//! * `latency`  — sum over hops of (base latency + arbitration wait),
//! * `duration` — maximum single-hop serialization time, i.e. the number of
//!   cycles the widest payload occupies the narrowest traversed port.
//!
//! Word-granularity requests (4 bytes) have duration 1 everywhere; larger
//! bursts stretch `duration` but still occupy each port only for their own
//! transfer time thanks to cut-through forwarding.

use serde::{Deserialize, Serialize};

use crate::Cycle;

/// Bytes moved per port per cycle by default, and the word size.
pub const WORD_BYTES: u32 = 4;

/// Kind of memory access carried by a request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessKind {
    Read,
    Write,
    /// Read-modify-write; modeled as a read with one extra bank busy cycle.
    Atomic,
}

impl AccessKind {
    pub fn letter(self) -> char {
        match self {
            AccessKind::Read => 'R',
            AccessKind::Write => 'W',
            AccessKind::Atomic => 'A',
        }
    }

    pub fn from_letter(c: char) -> Option<Self> {
        match c {
            'R' => Some(AccessKind::Read),
            'W' => Some(AccessKind::Write),
            'A' => Some(AccessKind::Atomic),
            _ => None,
        }
    }
}

/// Decoded location of an address: which bank serves it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BankLoc {
    pub group: u16,
    pub tile: u16,
    pub bank: u16,
    /// Word offset inside the bank.
    pub offset: u32,
}

/// A request (or its response) in flight.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Request {
    /// Globally unique, assigned in issue order.
    pub id: u64,
    /// Linear index of the initiating PE.
    pub initiator: u32,
    pub addr: u64,
    pub kind: AccessKind,
    /// Payload size in bytes of the data the access moves.
    pub size: u32,
    /// Decoded target bank, fixed at issue time.
    pub dest: BankLoc,
    pub issued_at: Cycle,
    /// Accumulated per-hop latency (base + arbitration) over both networks.
    pub latency: u64,
    /// Maximum per-hop serialization duration seen so far.
    pub duration: u64,
    /// True once the bank has serviced the access and this value is the
    /// response heading back to `initiator`.
    pub is_response: bool,
    /// Mesh channel that carried the request out of its source group, if
    /// any. The response network reuses exactly this channel.
    pub channel: Option<u16>,
}

impl Request {
    /// Bytes this transaction occupies on the network it currently rides.
    ///
    /// Requests are dataless for reads (a header word) and data-bearing for
    /// writes; responses are the opposite (data for reads, an ack word for
    /// writes). Atomics move one operand word each way.
    pub fn payload_bytes(&self) -> u32 {
        let data = self.size.max(WORD_BYTES);
        match (self.kind, self.is_response) {
            (AccessKind::Read, false) => WORD_BYTES,
            (AccessKind::Read, true) => data,
            (AccessKind::Write, false) => data,
            (AccessKind::Write, true) => WORD_BYTES,
            (AccessKind::Atomic, _) => WORD_BYTES,
        }
    }
}

/// Cycles a `bytes`-sized payload occupies a port of width `bytes_per_cycle`.
pub fn transfer_duration(bytes: u32, bytes_per_cycle: u32) -> u64 {
    debug_assert!(bytes_per_cycle > 0);
    bytes.div_ceil(bytes_per_cycle).max(1) as u64
}
