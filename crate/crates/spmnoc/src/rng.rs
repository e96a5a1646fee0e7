//! Deterministic pseudo-random number generation.
//!
//! All stochastic behaviour in the simulator (traffic generation, remap
//! schedules) is derived from one fixed, named generator: **SplitMix64**.
//! It is a 64-bit shift/multiply generator with a single u64 state, so the
//! exact output sequence is reproducible across platforms and independent
//! implementations. Streams are split by hashing a stream key into the seed,
//! which keeps per-PE request generation a pure function of
//! `(seed, pe, step)` and remap schedules a pure function of
//! `(seed, cycle, group, block)`.

/// Golden-ratio increment of the SplitMix64 state walk.
const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// A SplitMix64 generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    /// Derives an independent stream from `seed` and a stream key.
    ///
    /// The key is mixed through one finalizer round so that related keys
    /// (pe 0, pe 1, ...) land in unrelated regions of the state space.
    pub fn stream(seed: u64, key: u64) -> Self {
        SplitMix64 {
            state: mix(seed ^ mix(key.wrapping_mul(GAMMA))),
        }
    }

    /// Next raw 64-bit output.
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GAMMA);
        mix(self.state)
    }

    /// Uniform draw in `[0, bound)`. `bound` must be nonzero.
    ///
    /// Uses the widening-multiply method; the bias is < 2^-32 for the bounds
    /// used here (all far below 2^32), and the result stays a pure function
    /// of the state sequence.
    pub fn next_bounded(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        ((self.next_u64() >> 32) * bound) >> 32
    }

    /// Uniform draw in `[0, 1)` with 53-bit resolution.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// SplitMix64 output finalizer (fmix64 variant with shifts 30/27/31).
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combines seed material into a single derived key.
///
/// Used for keyed draws such as the remap permutation for
/// `(seed, cycle, group, block)`.
pub fn mix_key(parts: &[u64]) -> u64 {
    let mut acc = 0x243F_6A88_85A3_08D3u64; // pi fraction, arbitrary nonzero
    for &p in parts {
        acc = mix(acc ^ p.wrapping_mul(GAMMA)).wrapping_add(p);
    }
    acc
}

/// In-place Fisher-Yates shuffle driven by `rng`.
pub fn shuffle<T>(items: &mut [T], rng: &mut SplitMix64) {
    for i in (1..items.len()).rev() {
        let j = rng.next_bounded(i as u64 + 1) as usize;
        items.swap(i, j);
    }
}
