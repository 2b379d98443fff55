//! Counter-based random streams.
//!
//! Every random quantity in the crate is drawn from a ChaCha8 stream that is
//! addressed by a `(seed, stream)` pair, so work can be split over threads
//! without changing a single draw. Seeds for nested units of work (replicate,
//! subject, imputation, bootstrap resample) are obtained with [`derive_seed`],
//! a SplitMix64 finaliser over the parent seed and the child index.
//!
//! Stream layout used across the crate:
//!
//! * simulation: dataset seed `s`, subject `i` draws from `stream(s, i)`
//!   (subject-major, each subject's draws in temporal order);
//! * study replicate `r`: dataset seed `derive_seed(derive_seed(S, DOMAIN_SIMULATE), r)`;
//! * multiple imputation `t`: `stream(derive_seed(seed, DOMAIN_IMPUTE), t)`;
//! * bootstrap resample `b`: `stream(derive_seed(seed, DOMAIN_BOOTSTRAP), b)`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

pub type StreamRng = ChaCha8Rng;

pub const DOMAIN_SIMULATE: u64 = 0x5349_4d55;
pub const DOMAIN_IMPUTE: u64 = 0x494d_5055;
pub const DOMAIN_BOOTSTRAP: u64 = 0x424f_4f54;
pub const DOMAIN_ORACLE: u64 = 0x4f52_4143;
pub const DOMAIN_ESTIMATE: u64 = 0x4553_5449;

/// SplitMix64 mix of a parent seed and a child index.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for `(seed, stream)`.
pub fn stream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform on the open interval (0, 1) with 53 bits of resolution.
pub fn open_uniform<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal variate by inversion of the CDF.
pub fn std_normal<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    let u = open_uniform(rng);
    standard_normal().inverse_cdf(u)
}

fn standard_normal() -> Normal {
    Normal::standard()
}
