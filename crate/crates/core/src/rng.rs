//! Named RNG streams.
//!
//! Every consumer of randomness (environment, each agent, each cousin, belief
//! noise, ...) draws from its own ChaCha stream whose seed is derived from the
//! master seed and a stable label. Adding a consumer never perturbs the
//! streams of the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStreams {
    master: u64,
}

impl SeedStreams {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn seed_for(&self, label: &str) -> u64 {
        let mut hasher = Sha256::new();
        hasher.update(self.master.to_le_bytes());
        hasher.update(label.as_bytes());
        let digest = hasher.finalize();
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        u64::from_le_bytes(bytes)
    }

    pub fn stream(&self, label: &str) -> StreamRng {
        StreamRng::seed_from_u64(self.seed_for(label))
    }

    /// Stream for an indexed consumer, e.g. `("agent", 2)`.
    pub fn indexed(&self, label: &str, index: usize) -> StreamRng {
        self.stream(&format!("{label}/{index}"))
    }
}
