//! Seed derivation and RNG construction.
//!
//! Every random stream in the crate is a `ChaCha8Rng` seeded from a `u64`
//! derived by hashing a tag plus a list of integer coordinates, so that
//! independent tasks (pairs, grid cells, epochs, clients) get independent yet
//! reproducible streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Hash `(tag, parts)` into a 64-bit seed.
pub fn derive_seed(tag: &str, parts: &[u64]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update((tag.len() as u64).to_le_bytes());
    hasher.update(tag.as_bytes());
    for p in parts {
        hasher.update(p.to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// Stable 64-bit code for a string, for folding names into seeds.
pub fn tag_code(name: &str) -> u64 {
    derive_seed(name, &[])
}

/// Hex SHA-256 digest of arbitrary bytes.
pub fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn derived_seeds_are_stable_and_distinct() {
        assert_eq!(derive_seed("pair", &[1, 2]), derive_seed("pair", &[1, 2]));
        assert_ne!(derive_seed("pair", &[1, 2]), derive_seed("pair", &[2, 1]));
        assert_ne!(derive_seed("pair", &[1]), derive_seed("pai", &[1]));
    }

    #[test]
    fn seeded_streams_repeat() {
        let a: Vec<u32> = (0..4).map(|_| 0).scan(seeded(5), |r, _: u32| Some(r.random())).collect();
        let b: Vec<u32> = (0..4).map(|_| 0).scan(seeded(5), |r, _: u32| Some(r.random())).collect();
        assert_eq!(a, b);
    }
}
