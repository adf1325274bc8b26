//! Seed derivation. Every random draw in the crate is a pure function of an
//! explicit base seed and a label path, so rollouts and sweeps are
//! reproducible regardless of execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Mix a base seed with a label and an index into a new 64-bit seed.
pub fn derive_seed(base: u64, label: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    hasher.update((label.len() as u64).to_le_bytes());
    hasher.update(label.as_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivation_is_stable_and_label_sensitive() {
        assert_eq!(derive_seed(7, "a", 1), derive_seed(7, "a", 1));
        assert_ne!(derive_seed(7, "a", 1), derive_seed(7, "a", 2));
        assert_ne!(derive_seed(7, "a", 1), derive_seed(7, "b", 1));
        assert_ne!(derive_seed(7, "a", 1), derive_seed(8, "a", 1));
        // label/index boundary must not alias
        assert_ne!(derive_seed(0, "ab", 0), derive_seed(0, "a", u64::from(b'b')));
    }
}
