//! Reproducible per-trial random streams.
//!
//! Every trial draws from its own ChaCha8 generator seeded with a hash of
//! (master seed, trial index), so trials can run in any order or in parallel
//! and any single trial can be replayed from its recorded seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type TrialRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `trial` under master seed `master`.
pub fn trial_seed(master: u64, trial: u64) -> u64 {
    splitmix64(splitmix64(master) ^ trial.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

pub fn rng_from_seed(seed: u64) -> TrialRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn trial_rng(master: u64, trial: u64) -> TrialRng {
    rng_from_seed(trial_seed(master, trial))
}
