//! Counter-based random streams.
//!
//! Every random draw is addressed by `(seed, replicate, step, phase, particle)`,
//! so results do not depend on how work is scheduled across threads.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator handed to kernels and samplers.
pub type StreamRng = ChaCha8Rng;

const DOMAIN_TAG: [u8; 16] = *b"fkips-stream-v1\0";

/// Which part of an algorithm step consumes the stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Init = 0,
    Selection = 1,
    Mutation = 2,
    Aux = 3,
}

/// Seed and replicate index identifying one independent run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Lineage {
    pub seed: u64,
    pub replicate: u64,
}

impl Lineage {
    pub fn new(seed: u64, replicate: u64) -> Self {
        Self { seed, replicate }
    }

    /// Independent stream for one particle at one step and phase.
    pub fn stream(&self, step: u64, phase: Phase, particle: u64) -> StreamRng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.replicate.to_le_bytes());
        key[16..].copy_from_slice(&DOMAIN_TAG);
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream((step << 2) | phase as u64);
        rng.set_word_pos(u128::from(particle) << 32);
        rng
    }
}
