//! Seed derivation for reproducible, order-independent random streams.
//!
//! Every parallel task (imputation, fold, tree, candidate) receives its own
//! ChaCha stream keyed by the root seed plus a path of integer labels, so
//! results never depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a root seed with a path of labels into a child seed.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix(seed), |acc, &label| splitmix(acc ^ splitmix(label)))
}

/// A stream for the task identified by `path` under `seed`.
pub fn stream(seed: u64, path: &[u64]) -> Stream {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, path))
}

// Domain labels keep sibling streams apart.
pub(crate) const TAG_IMPUTE: u64 = 0x1;
pub(crate) const TAG_FOLDS: u64 = 0x2;
pub(crate) const TAG_FIT: u64 = 0x3;
pub(crate) const TAG_PIPELINE: u64 = 0x4;
