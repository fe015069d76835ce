//! Named, independent random streams derived from one experiment seed.
//!
//! Every consumer of randomness gets its own ChaCha stream, so adding draws
//! in one place (say, a policy's MC samples) never shifts the draws of
//! another (the meals or the patient parameters).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    PatientParams = 1,
    Meals = 2,
    InitialState = 3,
    SensorNoise = 4,
    Policy = 5,
    Solver = 6,
    Training = 7,
    Network = 8,
}

const KINDS: u64 = 16;

/// Stream `kind` of run `seed`, sub-indexed by `index` (an iteration or a
/// rollout number).
pub fn stream(seed: u64, kind: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index * KINDS + kind as u64);
    rng
}
