//! Seed fan-out. One root seed drives every stage; each stage derives its own
//! stream by hashing a stage name into the root, so adding randomness to one
//! stage never shifts another stage's draws.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a, fixed here so derived seeds never change across toolchains.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Derive a child seed from a root seed and a stage name.
pub fn derive_seed(root: u64, stage: &str) -> u64 {
    fnv1a(stage.as_bytes()) ^ root.rotate_left(17)
}

/// Derive a child seed that also depends on an index (epoch, batch, clip, ...).
pub fn derive_seed_indexed(root: u64, stage: &str, index: u64) -> u64 {
    derive_seed(root, stage) ^ fnv1a(&index.to_le_bytes())
}

/// Deterministic generator for a stage.
pub fn stage_rng(root: u64, stage: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, stage))
}

/// Deterministic generator for an indexed stage (per epoch, per clip, ...).
pub fn indexed_rng(root: u64, stage: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed_indexed(root, stage, index))
}
