//! Seed derivation. Every stochastic step draws from its own ChaCha stream
//! keyed by the master seed and a (label, entity, index) path, so results
//! do not depend on iteration order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    fnv1a64_extend(FNV_OFFSET, bytes)
}

fn fnv1a64_extend(mut hash: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// `master ^ fnv1a64(label, entity_id, index)` with NUL separators.
pub fn derive_seed(master: u64, label: &str, entity_id: &str, index: u64) -> u64 {
    let mut h = fnv1a64_extend(FNV_OFFSET, label.as_bytes());
    h = fnv1a64_extend(h, &[0]);
    h = fnv1a64_extend(h, entity_id.as_bytes());
    h = fnv1a64_extend(h, &[0]);
    h = fnv1a64_extend(h, &index.to_le_bytes());
    master ^ h
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
