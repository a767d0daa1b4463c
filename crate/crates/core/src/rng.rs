//! Reproducible random streams.
//!
//! Every particle (or path) owns its own ChaCha8 stream. The key is built from
//! `(seed, stream_id)` and the ChaCha stream number is the particle index, so the
//! draws seen by particle `i` at step `k` depend only on `(seed, stream_id, i, k)`
//! and never on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub use rand_chacha::ChaCha8Rng as StreamRng;

/// Identifies a family of particle streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub stream_id: u64,
}

impl StreamKey {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Same seed, different stream id. Replicas use this with their index.
    pub fn with_stream(self, stream_id: u64) -> Self {
        Self { stream_id, ..self }
    }

    /// The stream owned by particle `index`.
    pub fn particle(&self, index: u64) -> StreamRng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.stream_id.to_le_bytes());
        key[16..24].copy_from_slice(&0x6265_7371_5f6d_665fu64.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(index);
        rng
    }

    /// Streams for particles `0..n`.
    pub fn particles(&self, n: usize) -> Vec<StreamRng> {
        (0..n as u64).map(|i| self.particle(i)).collect()
    }
}

#[inline]
pub fn standard_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}
