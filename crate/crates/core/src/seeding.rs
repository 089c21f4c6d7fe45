//! Seed derivation. Every random stream in the crate is a ChaCha generator
//! seeded from a root value and a purpose label, so sub-streams never alias.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

pub(crate) fn derive_seed(root: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

pub(crate) fn rng_for(root: u64, label: &str) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(derive_seed(root, label))
}

pub(crate) fn rng_from(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}
