//! Deterministic random streams.
//!
//! Every random draw in the crate comes from a [`SeedStream`]: a master seed
//! plus a stream index. The master seed is expanded into a ChaCha8 key with
//! `SeedableRng::seed_from_u64`, and the index selects one of ChaCha's 2^64
//! independent streams. Replicate `i` of a stopped-sum simulation uses stream
//! `2i` for the stopping draw and stream `2i + 1` for the increments, so the
//! result never depends on how replicates are scheduled across workers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedStream {
    pub master_seed: u64,
    pub stream: u64,
}

impl SeedStream {
    pub fn new(master_seed: u64, stream: u64) -> Self {
        Self { master_seed, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream);
        rng
    }

    /// Stream carrying the stopping draw of replicate `index`.
    pub fn stopping(master_seed: u64, index: u64) -> Self {
        Self::new(master_seed, 2 * index)
    }

    /// Stream carrying the increments of replicate `index`.
    pub fn increments(master_seed: u64, index: u64) -> Self {
        Self::new(master_seed, 2 * index + 1)
    }
}

/// Builds per-stream generators from one master seed without re-expanding
/// the key each time.
#[derive(Debug, Clone)]
pub struct StreamFactory {
    base: ChaCha8Rng,
}

impl StreamFactory {
    pub fn new(master_seed: u64) -> Self {
        Self {
            base: ChaCha8Rng::seed_from_u64(master_seed),
        }
    }

    pub fn stream(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_stream(stream);
        rng.set_word_pos(0);
        rng
    }
}

/// Uniform draw on `[0, 1)` with 53 bits of precision.
#[inline]
pub fn uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>()
}
