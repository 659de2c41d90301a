//! Keyed random streams.
//!
//! Every stream is a ChaCha8 generator whose 256-bit seed is the SHA-256 of
//! the run seed, a label and a list of indices. Streams therefore do not
//! depend on the order (or thread) in which they are created.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

pub fn stream(seed: u64, label: &str, indices: &[u64]) -> StreamRng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update((label.len() as u64).to_le_bytes());
    hasher.update(label.as_bytes());
    for i in indices {
        hasher.update(i.to_le_bytes());
    }
    let key: [u8; 32] = hasher.finalize().into();
    ChaCha8Rng::from_seed(key)
}
