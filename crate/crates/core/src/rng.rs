//! Deterministic seed-stream derivation.
//!
//! All randomness in the library flows through explicitly seeded ChaCha
//! generators. Each logical stream (source signals, receiver noise, target
//! draws, agent initialization, per-trial evaluation) derives an independent
//! sub-seed from the master seed and a stream path, so changing how often one
//! stream is consumed never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Well-known stream identifiers. Composite paths append further indices
/// (trial number, sweep point, antenna index).
pub mod streams {
    pub const SIGNALS: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const TARGETS: u64 = 3;
    pub const AGENTS: u64 = 4;
    pub const TRIAL: u64 = 5;
    pub const SWEEP_POINT: u64 = 6;
    pub const SINGLE_TARGET_BASELINE: u64 = 7;
    pub const DIAGNOSTICS: u64 = 8;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a sub-seed from a master seed and a stream path.
pub fn substream(master: u64, path: &[u64]) -> u64 {
    let mut state = splitmix64(master);
    for &part in path {
        state = splitmix64(state ^ splitmix64(part));
    }
    state
}

/// Builds a seeded generator for the given stream path.
pub fn stream_rng(master: u64, path: &[u64]) -> ChaCha8Rng {
    let mut state = substream(master, path);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}
