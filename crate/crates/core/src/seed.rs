//! Counter-based seed derivation.
//!
//! Every stochastic stage of an audit draws its seed from the master seed and
//! a path of integer labels, so any single sweep cell can be rerun on its own
//! and produce the same bytes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STAGE_PROCESS: u64 = 1;
pub const STAGE_TRAIN_POOL: u64 = 2;
pub const STAGE_HOLDOUT_POOL: u64 = 3;
pub const STAGE_SUBSAMPLE: u64 = 4;
pub const STAGE_GENERATOR: u64 = 5;
pub const STAGE_AUDIT: u64 = 6;
pub const STAGE_ATTACK: u64 = 7;
pub const STAGE_BOOTSTRAP: u64 = 8;
pub const STAGE_EXTERNAL_AUX: u64 = 9;
pub const STAGE_SANITY: u64 = 10;
pub const STAGE_OVERFIT: u64 = 11;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `labels` into `master` one counter at a time.
pub fn derive_seed(master: u64, labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(splitmix64(master), |acc, &l| splitmix64(acc ^ splitmix64(l)))
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
