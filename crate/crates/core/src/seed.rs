//! Seed plumbing. Every random draw in a run descends from one user seed via
//! labelled sub-seeds, so point sampling and weight draws never share a stream.
//!
//! A sub-seed is the first eight bytes (little endian) of
//! `SHA-256(seed.to_le_bytes() || label)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

pub const POINTS: &str = "points";
pub const LAYER: &str = "layer";
pub const TEST_POINTS: &str = "test-points";

pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
