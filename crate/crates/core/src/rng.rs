//! Deterministic random number streams.
//!
//! One run seed fans out into independent streams so that parameter
//! initialization, per-epoch batch shuffling, dropout and analysis sampling
//! never consume draws from each other. Any stream can be re-created from
//! the run seed alone, which is what makes checkpoint-resume deterministic.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_INIT: u64 = 1;
pub const STREAM_DROPOUT_BASE: u64 = 1_000;
pub const STREAM_EPOCH_BASE: u64 = 2_000_000;

/// A generator pinned to one (seed, stream) pair.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// The stream used for parameter initialization.
pub fn init_rng(seed: u64) -> ChaCha8Rng {
    stream_rng(seed, STREAM_INIT)
}

/// The dropout stream for one training epoch.
pub fn dropout_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    stream_rng(seed, STREAM_DROPOUT_BASE + epoch as u64)
}
