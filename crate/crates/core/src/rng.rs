//! Counter-keyed random streams.
//!
//! Every trajectory draws from its own ChaCha stream whose key is a hash of
//! `(run_seed, epoch, iteration, trajectory)`. Sampling order and worker
//! count therefore never influence the numbers a trajectory sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub run_seed: u64,
    pub epoch: u64,
    pub iteration: u64,
    pub trajectory: u64,
}

impl RngStream {
    pub fn new(run_seed: u64, epoch: u64, iteration: u64, trajectory: u64) -> Self {
        Self {
            run_seed,
            epoch,
            iteration,
            trajectory,
        }
    }

    /// Same run, epoch and iteration; a different trajectory slot.
    pub fn with_trajectory(self, trajectory: u64) -> Self {
        Self { trajectory, ..self }
    }

    pub fn key(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(b"morl-stream-v1");
        for word in [self.run_seed, self.epoch, self.iteration, self.trajectory] {
            hasher.update(word.to_le_bytes());
        }
        hasher.finalize().into()
    }

    pub fn rng(&self) -> StreamRng {
        ChaCha8Rng::from_seed(self.key())
    }
}
