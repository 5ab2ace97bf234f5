//! Seed derivation.
//!
//! One top-level seed feeds every random draw. Each consumer gets its own
//! ChaCha stream, selected by a fixed label, so adding draws in one place
//! never shifts the draws seen elsewhere.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream labels for the independent consumers of the top-level seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    MapInit = 1,
    Training = 2,
    ContinualUpdate = 3,
    StreamGeneration = 4,
    PcaInit = 5,
}

/// An rng for `purpose` under `seed`, further split by `counter`.
///
/// The counter jumps the word position so that e.g. every continual
/// update (one per detected shift) draws from a disjoint region.
pub fn rng_for(seed: u64, purpose: Purpose, counter: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose as u64);
    rng.set_word_pos((counter as u128) << 64);
    rng
}
