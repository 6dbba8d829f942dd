//! Keyed random streams.
//!
//! Every random draw in the simulator comes from a ChaCha stream whose seed is
//! derived from a base seed plus a list of integer keys (trial, step, pulse,
//! symbol, ...). Results therefore do not depend on evaluation order or on how
//! work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags, so that different consumers of the same (seed, k) never collide.
pub mod tag {
    pub const CONSTELLATION: u64 = 0x01;
    pub const NOISE: u64 = 0x02;
    pub const PATH_GAIN: u64 = 0x03;
    pub const FILTER: u64 = 0x04;
    pub const INIT: u64 = 0x05;
    pub const FUSION: u64 = 0x06;
    pub const TRIAL: u64 = 0x07;
    pub const STATION: u64 = 0x08;
}

pub type StreamRng = ChaCha8Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a 64-bit sub-seed from a base seed and a key path.
pub fn derive_seed(seed: u64, keys: &[u64]) -> u64 {
    let mut state = seed;
    let mut out = splitmix64(&mut state);
    for &k in keys {
        state ^= k.wrapping_mul(0xD6E8_FEB8_6659_FD93);
        out ^= splitmix64(&mut state);
        state = out;
    }
    out
}

/// A reproducible RNG keyed by `(seed, keys...)`.
pub fn stream(seed: u64, keys: &[u64]) -> StreamRng {
    let mut state = derive_seed(seed, keys);
    let mut bytes = [0u8; 32];
    for chunk in bytes.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}
