//! Seeded, splittable random number generation.
//!
//! Every sampling routine in the crate takes an explicit `&mut LabRng`; nothing
//! touches thread-local or OS entropy. Independent workers get their own
//! stream via [`stream`] or [`fork`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type LabRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> LabRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for stream `stream` of `seed`. Streams of one seed never overlap.
pub fn stream(seed: u64, stream: u64) -> LabRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derive an independent child generator, advancing the parent.
pub fn fork(parent: &mut LabRng) -> LabRng {
    ChaCha8Rng::seed_from_u64(parent.random())
}
