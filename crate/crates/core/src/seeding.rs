//! Seed fan-out.
//!
//! Every random stream in a run is derived from a single run seed. A child
//! stream is identified by a `(domain, index)` pair and seeded with
//! `seed ^ index` mixed through SplitMix64 together with a per-domain tag, so
//! that e.g. item 3 of the training stream and item 3 of the evaluation
//! stream never share a sequence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used everywhere in the crate.
pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed for child stream `index` of `domain` from `seed`.
pub fn derive_seed(seed: u64, domain: &str, index: u64) -> u64 {
    let tag = domain
        .bytes()
        .fold(0xCBF2_9CE4_8422_2325_u64, |h, b| {
            (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
        });
    splitmix64(splitmix64(seed ^ index) ^ tag)
}

pub fn rng_from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

pub fn child_rng(seed: u64, domain: &str, index: u64) -> Rng {
    rng_from_seed(derive_seed(seed, domain, index))
}
