//! Deterministic seed derivation.
//!
//! Every stochastic stream in the engine is keyed off one master seed. The
//! derivations here are platform independent and stable across releases,
//! which `std::hash` does not promise.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Stream RNG used everywhere a seeded draw is needed.
pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a sequence of integers into one seed.
pub fn mix(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x6A09_E667_F3BC_C908, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Per-agent, per-round stream seed: `hash(master_seed, agent_id, round)`.
pub fn agent_round_seed(master_seed: u64, agent_id: u64, round: u32) -> u64 {
    mix(&[master_seed, agent_id, u64::from(round)])
}

/// Seed for replicate `replicate` of the group named `group`.
pub fn group_replicate_seed(base_seed: u64, group: &str, replicate: u32) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base_seed.to_le_bytes());
    hasher.update((group.len() as u64).to_le_bytes());
    hasher.update(group.as_bytes());
    hasher.update(u64::from(replicate).to_le_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}
