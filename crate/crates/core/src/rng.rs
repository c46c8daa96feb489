//! Named random substreams derived from a single root seed.
//!
//! Every consumer (dataset generation, weight init, training, sampling,
//! metric subsampling) asks for its own stream by name. Streams are derived
//! by hashing `(root, name, index)`, so adding a new consumer never shifts the
//! draws seen by the existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    root: u64,
}

impl SeedTree {
    pub fn new(root: u64) -> Self {
        Self { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    pub fn stream(&self, name: &str) -> Rng {
        self.indexed(name, 0)
    }

    pub fn indexed(&self, name: &str, index: u64) -> Rng {
        let mut h = Sha256::new();
        h.update(self.root.to_le_bytes());
        h.update((name.len() as u64).to_le_bytes());
        h.update(name.as_bytes());
        h.update(index.to_le_bytes());
        let digest = h.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(seed)
    }

    /// A child tree, for handing a whole namespace to a sub-pipeline.
    pub fn child(&self, name: &str) -> SeedTree {
        use rand::RngCore;
        SeedTree::new(self.stream(name).next_u64())
    }
}

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
