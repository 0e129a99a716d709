//! Deterministic seed derivation via splitmix64.
//!
//! Every randomized stage draws its seed from the single run seed through
//! these mixers, so reruns are bit-identical and streams never collide.

/// Advances `state` and returns the next splitmix64 output.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream tags keeping the per-purpose seed streams disjoint.
pub mod stream {
    pub const NOISE_FIELD: u64 = 1;
    pub const SCENE: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const MODEL_INIT: u64 = 4;
    pub const SPLIT: u64 = 5;
    pub const CHANNEL: u64 = 6;
}

/// Derives an independent seed from `(base, stream, index)`.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut state = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mixed = splitmix64(&mut state);
    let mut state = mixed ^ index.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    splitmix64(&mut state)
}
