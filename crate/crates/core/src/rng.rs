//! The one seedable generator used everywhere randomness is needed.
//!
//! Sequential streams are xoshiro256** seeded through SplitMix64
//! (`Xoshiro256StarStar::seed_from_u64`). Per-cell noise in simulated reads
//! uses the SplitMix64 output sequence directly, since output `i` of that
//! sequence can be computed without generating the first `i - 1`.

use rand::SeedableRng;
use rand::RngCore;
use rand_xoshiro::Xoshiro256StarStar;

pub type Prng = Xoshiro256StarStar;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Output finalizer of SplitMix64.
pub fn splitmix64_mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Output number `index` (zero-based) of the SplitMix64 sequence started at
/// `state`.
pub fn splitmix64_at(state: u64, index: u64) -> u64 {
    splitmix64_mix(state.wrapping_add(GOLDEN_GAMMA.wrapping_mul(index.wrapping_add(1))))
}

pub fn prng(seed: u64) -> Prng {
    Prng::seed_from_u64(seed)
}

/// Independent child seed for `(master, label, index)`.
pub fn derive_seed(master: u64, label: u64, index: u64) -> u64 {
    splitmix64_at(splitmix64_mix(master ^ splitmix64_mix(label)), index)
}

/// Uniform index in `0..bound` via the high half of a 64x64 product.
pub fn bounded(rng: &mut Prng, bound: u64) -> u64 {
    ((rng.next_u64() as u128 * bound as u128) >> 64) as u64
}

/// Uniform in `[0, 1)` with 53 bits of precision.
pub fn unit_f64(rng: &mut Prng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub(crate) mod labels {
    pub const READ: u64 = 1;
    pub const CODEWORD: u64 = 2;
    pub const EXTRACTOR: u64 = 3;
    pub const TRIAL: u64 = 4;
    pub const VALIDATION: u64 = 5;
    pub const MASKING: u64 = 6;
    pub const SELECTION: u64 = 7;
}
