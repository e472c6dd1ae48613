//! Reproducible random streams.
//!
//! Every random draw in the crate comes from a [`RngStream`]. A stream is keyed
//! by `(seed, purpose)`; the pair forms the 256-bit ChaCha key, and
//! [`RngStream::substream`] selects one of 2^64 ChaCha stream ids under that key.
//! ChaCha is counter based, so distinct `(seed, purpose, index)` triples give
//! non-overlapping sequences no matter which worker consumes them or in what
//! order. Monte-Carlo shards and training restarts each take their own index.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Part of the key, so two purposes never share draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Init = 1,
    Training = 2,
    Validation = 3,
    Evaluation = 4,
    MonteCarlo = 5,
    GradCheck = 6,
    Auxiliary = 7,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    seed: u64,
    purpose: Purpose,
}

impl RngStream {
    pub fn new(seed: u64, purpose: Purpose) -> Self {
        Self { seed, purpose }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn purpose(&self) -> Purpose {
        self.purpose
    }

    /// Generator for substream `index`.
    pub fn substream(&self, index: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&(self.purpose as u64).to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(index);
        rng
    }

    /// Generator for substream 0.
    pub fn rng(&self) -> ChaCha8Rng {
        self.substream(0)
    }
}
