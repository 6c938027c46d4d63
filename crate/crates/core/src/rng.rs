//! Reproducible random streams keyed by a master seed and an index path.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `master` with each element of `path` in turn.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

pub fn stream(master: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, path))
}

// Domain tags keep streams for different purposes disjoint.
pub(crate) const TAG_SIMULATE: u64 = 1;
pub(crate) const TAG_MONTE_CARLO: u64 = 2;
pub(crate) const TAG_RESTART: u64 = 3;
pub(crate) const TAG_SWEEP: u64 = 4;
