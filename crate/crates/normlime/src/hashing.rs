//! Small digest and seed-derivation helpers shared across modules.

use sha2::{Digest, Sha256};

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// splitmix64 finalizer; decent avalanche for cheap seed mixing.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a base seed and a path of indices. Used so every
/// (method, threshold, run) cell and every anchor gets an independent RNG
/// stream while staying reproducible for any parallel schedule.
pub(crate) fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut h = splitmix64(base ^ 0x4e4c_4b4d); // "NLKM"
    for (i, &p) in parts.iter().enumerate() {
        h = splitmix64(h ^ splitmix64(p.wrapping_add(i as u64 + 1)));
    }
    h
}
