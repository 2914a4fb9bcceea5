//! Dense kernels, differentiable primitives and the finite-difference oracle.

mod matrix;
mod mlp;
mod ops;

pub use matrix::{dot, norm, Matrix};
pub use mlp::{Dense, Mlp, MlpTrace};
pub use ops::{
    cosine_sim, finite_diff_grad, max_relative_error, row_normalize, row_normalize_backward,
    row_norms, softmax_rows, GradPair, MIN_ROW_NORM,
};
pub(crate) use ops::softmax_in_place;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic RNG used throughout the crate.
pub type Rng64 = ChaCha8Rng;

/// SplitMix64 finalizer; derives independent stream seeds from `(seed, index)`.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_for(seed: u64, index: u64) -> Rng64 {
    Rng64::seed_from_u64(mix_seed(seed, index))
}
