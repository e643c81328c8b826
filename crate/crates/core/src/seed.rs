//! Seed derivation.
//!
//! Every random stream in the pipeline is derived from one root seed and a
//! short module tag: the first eight bytes (little endian) of
//! `SHA-256(root.to_le_bytes() || tag)` seed a ChaCha8 generator. Streams for
//! different tags are independent, and adding a new consumer never perturbs
//! the existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// The concrete generator used everywhere.
pub type Rng = ChaCha8Rng;

/// Derives a child seed for `tag` from `root`.
pub fn derive(root: u64, tag: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    hasher.update(tag.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// A generator seeded from `(root, tag)`.
pub fn stream(root: u64, tag: &str) -> Rng {
    Rng::seed_from_u64(derive(root, tag))
}

/// A generator seeded directly from `seed`.
pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn derive_is_stable_and_tag_sensitive() {
        assert_eq!(derive(7, "datagen"), derive(7, "datagen"));
        assert_ne!(derive(7, "datagen"), derive(7, "train"));
        assert_ne!(derive(7, "datagen"), derive(8, "datagen"));
    }

    #[test]
    fn streams_reproduce() {
        let a: Vec<u32> = stream(1, "x").random_iter().take(4).collect();
        let b: Vec<u32> = stream(1, "x").random_iter().take(4).collect();
        assert_eq!(a, b);
    }
}
