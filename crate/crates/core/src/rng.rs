//! Seeding helpers.
//!
//! Every stochastic routine takes an explicit 64-bit seed. Sub-streams are
//! derived with [`derive_seed`], a SplitMix64 fold over the parent seed and a
//! list of stream identifiers, so that parallel work units draw from
//! independent but reproducible generators.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combine a parent seed with stream identifiers into a child seed.
pub fn derive_seed(seed: u64, stream: &[u64]) -> u64 {
    stream.iter().fold(splitmix64(seed), |acc, &id| {
        splitmix64(acc ^ splitmix64(id))
    })
}

/// FNV-1a over a label, for turning names (experiment, algorithm) into stream ids.
pub fn stream_id(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
