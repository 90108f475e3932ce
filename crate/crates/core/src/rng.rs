//! Reproducible random streams.
//!
//! Every independent unit of work (a replica, a Monte-Carlo chunk) gets its
//! own ChaCha8 generator seeded by [`derive_seed`]. Streams are never shared,
//! so results do not depend on how work is scheduled across threads.

use rand::distr::{Distribution, Open01};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::Scalar;

pub type StreamRng = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// Human-readable form of the derivation, logged alongside every artifact.
pub const STREAM_DERIVATION: &str = "ChaCha8Rng::seed_from_u64(splitmix64(seed + 0x9e3779b97f4a7c15 * (index + 1)))";

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed.wrapping_add(GOLDEN_GAMMA.wrapping_mul(index.wrapping_add(1))))
}

/// Stream number `index` under the master `seed`.
pub fn stream(seed: u64, index: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, index))
}

/// Uniform draw on the open interval (0, 1).
#[inline]
pub fn open01<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> T {
    let u: f64 = Open01.sample(rng);
    let u = T::lit(u);
    // Narrow types can round a draw onto the boundary.
    if u <= T::zero() {
        T::min_positive_value()
    } else if u >= T::one() {
        T::one() - T::epsilon()
    } else {
        u
    }
}

#[inline]
pub fn standard_normal<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> T {
    let z: f64 = StandardNormal.sample(rng);
    T::lit(z)
}
