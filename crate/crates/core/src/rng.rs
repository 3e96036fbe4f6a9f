//! Deterministic random substreams.
//!
//! Every randomized step draws from a ChaCha stream keyed by the master seed
//! and a path of integers (stage tag, generation, candidate index, ...). Work
//! can then be scheduled on any number of threads without changing results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stage tags used as the first path element.
pub mod tag {
    pub const INIT: u64 = 0x494e_4954;
    pub const GENERATION: u64 = 0x4745_4e45;
    pub const NOISE: u64 = 0x4e4f_4953;
    pub const SELECT: u64 = 0x5345_4c45;
    pub const PROJECT: u64 = 0x5052_4f4a;
    pub const WORKLOAD: u64 = 0x574b_4c44;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive an independent stream from `seed` and a path of integers.
pub fn substream(seed: u64, path: &[u64]) -> StreamRng {
    let mut key = [0u8; 32];
    let mut state = splitmix64(seed);
    for &p in path {
        state = splitmix64(state ^ splitmix64(p.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    for chunk in key.chunks_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Derive a child seed (rather than a stream) from `seed` and a path.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    use rand::RngCore;
    substream(seed, path).next_u64()
}
