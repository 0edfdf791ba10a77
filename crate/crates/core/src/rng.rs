//! Seeded randomness.
//!
//! Every random draw in the crate comes from ChaCha8 (`rand_chacha`), keyed
//! with `ChaCha8Rng::seed_from_u64(seed)` and separated into independent
//! streams with `set_stream`. A stream id combines a purpose tag with an
//! optional sub-index (usually a task id), so adding a task never perturbs
//! the draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Latency = 1,
    VariantAccuracy = 2,
    StitchedAccuracy = 3,
    TrainingSample = 4,
    Learner = 5,
    Runtime = 6,
    Instance = 7,
}

pub fn stream(seed: u64, purpose: Stream, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 32) | (index & 0xffff_ffff));
    rng
}
