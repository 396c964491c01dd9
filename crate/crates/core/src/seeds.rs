//! Seed derivation.
//!
//! Every random stream is seeded by `derive(master, stream, index)`: the three
//! words are folded through SplitMix64, so streams with different ids or
//! indices are decorrelated and each run can be reproduced on its own.

/// Stream ids used across the crate.
pub mod stream {
    pub const TRAIN_FUNCTION: u64 = 1;
    pub const TRAIN_RUNTIME: u64 = 2;
    pub const VALIDATION_FUNCTION: u64 = 3;
    pub const POLICY_INIT: u64 = 4;
    pub const TEST_FUNCTION: u64 = 5;
    pub const OPTIMIZER: u64 = 6;
    pub const PERTURBATION: u64 = 7;
    pub const RUNTIME: u64 = 8;
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn derive(master: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ stream) ^ index)
}
