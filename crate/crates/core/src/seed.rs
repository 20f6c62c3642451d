//! Portable seeded random streams.
//!
//! Every random quantity in the crate is drawn from [`Rng64`], a ChaCha8 stream
//! whose output is identical on every platform. Independent streams are obtained
//! with [`derive_seed`], which hashes a master seed together with a list of labels
//! (SHA-256, first 8 bytes little-endian). Keys are hierarchical, so adding a label
//! for a new method never shifts the streams of existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// The generator used for every seeded stream.
pub type Rng64 = ChaCha8Rng;

/// Derives a child seed from `master` and an ordered list of labels.
pub fn derive_seed(master: u64, labels: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    for label in labels {
        // length prefix keeps ["ab","c"] and ["a","bc"] apart
        hasher.update((label.len() as u64).to_le_bytes());
        hasher.update(label.as_bytes());
    }
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// A generator seeded from `derive_seed(master, labels)`.
pub fn stream(master: u64, labels: &[&str]) -> Rng64 {
    Rng64::seed_from_u64(derive_seed(master, labels))
}
