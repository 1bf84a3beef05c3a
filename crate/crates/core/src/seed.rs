//! Deterministic seed derivation.
//!
//! Every random stream in the simulator is keyed by `(master seed, purpose,
//! index...)` so that results do not depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags keep streams for different consumers disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Sample = 0x5341_4d50,
    MpsStep = 0x4d50_5353,
    Rollout = 0x524f_4c4c,
    Selection = 0x5345_4c45,
    Scenario = 0x5343_454e,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for `(seed, purpose, index)`.
pub fn derive_seed(seed: u64, purpose: Purpose, index: u64) -> u64 {
    let mut h = splitmix64(seed ^ 0x6d70_735f_7369_6d00);
    h = splitmix64(h ^ purpose as u64);
    splitmix64(h ^ index)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
