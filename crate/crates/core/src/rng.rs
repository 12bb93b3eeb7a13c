//! Seeded random streams.
//!
//! Every stochastic component draws from a ChaCha8 generator keyed by the
//! scenario seed and a 64-bit stream id (ChaCha's native stream counter), so
//! streams never overlap and adding draws to one component leaves the others
//! untouched. ChaCha8 output is specified bit-for-bit and is identical on
//! every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Well-known stream ids. Per-robot streams are derived with [`named_stream`].
pub mod streams {
    pub const CA_FILL: u64 = 1;
    pub const PILLAR_HEIGHTS: u64 = 2;
    pub const DYNAMIC_PLACEMENT: u64 = 3;
    pub const PLANNER: u64 = 16;
    pub const SMOOTHING: u64 = 17;
}

pub fn stream(seed: u64, stream_id: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// Stream keyed by a name (e.g. a robot name) so that a robot's noise does not
/// depend on its position in the fleet list.
pub fn named_stream(seed: u64, name: &str) -> SimRng {
    stream(seed, fnv1a64(name.as_bytes()) | (1 << 63))
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// SplitMix64 finalizer, used to mix two seeds into one.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
